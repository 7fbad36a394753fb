#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <doctest.h>

#ifndef MMDFORGE_CLI_PATH
#error "MMDFORGE_CLI_PATH must point at the command-line binary"
#endif

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

fs::path scratch_root() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "mmdforge_cli_tests";
    fs::create_directories(p);
    return p;
  }();
  return root;
}

RunResult run_cli(const std::string& args) {
  const fs::path out = scratch_root() / "stdout.txt";
  const fs::path err = scratch_root() / "stderr.txt";
  const std::string cmd = std::string(MMDFORGE_CLI_PATH) + " " + args + " > " + out.string() +
                          " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  RunResult result;
  result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(out.string());
  result.err = slurp(err.string());
  return result;
}

void write_file(const fs::path& path, const std::string& body) {
  std::ofstream f(path, std::ios::trunc);
  f << body;
}

// Two planted clusters, far enough apart that a shift is unmissable.
std::string cluster_csv(double center, int rows) {
  std::string body;
  for (int i = 0; i < rows; ++i) {
    const double jitter = 0.01 * static_cast<double>(i % 7);
    body += std::to_string(center + jitter) + "," + std::to_string(center - jitter) + "\n";
  }
  return body;
}

const std::string kTinyTrainFlags =
    " --set train.iters=2 --set train.eval_every=1 --set train.n_critic=2"
    " --set train.batch_size=8 --set data.samples=64 --set noise.dimension=3"
    " --set model.gen_hidden=8 --set model.enc_hidden=8 --set model.code_dim=4";

// Trace lines minus the wall-clock column (the final comma-separated field).
std::vector<std::string> trace_without_timing(const std::string& csv) {
  std::vector<std::string> rows;
  std::size_t begin = 0;
  while (begin < csv.size()) {
    std::size_t end = csv.find('\n', begin);
    if (end == std::string::npos) end = csv.size();
    const std::string line = csv.substr(begin, end - begin);
    begin = end + 1;
    if (line.empty()) continue;
    rows.push_back(line.substr(0, line.rfind(',')));
  }
  return rows;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with code 2") {
  CHECK(run_cli("").code == 2);
  CHECK(run_cli("train --bogus-flag").code == 2);
  CHECK(run_cli("frobnicate").code == 2);
  const RunResult help = run_cli("--help");
  CHECK(help.code == 0);
  CHECK(help.out.find("train") != std::string::npos);
  CHECK(help.out.find("experiment") != std::string::npos);
}

TEST_CASE("two-sample test distinguishes matched from shifted files") {
  const fs::path dir = scratch_root() / "test_cmd";
  fs::create_directories(dir);
  write_file(dir / "x.csv", cluster_csv(0.0, 40));
  write_file(dir / "y.csv", cluster_csv(0.0, 40));
  write_file(dir / "far.csv", cluster_csv(5.0, 40));

  const RunResult same =
      run_cli("test --x " + (dir / "x.csv").string() + " --y " + (dir / "y.csv").string() +
              " --permutations 100 --seed 4");
  CHECK(same.code == 0);
  CHECK(same.out.find("\"reject\":false") != std::string::npos);

  const RunResult far =
      run_cli("test --x " + (dir / "x.csv").string() + " --y " + (dir / "far.csv").string() +
              " --permutations 100 --seed 4");
  CHECK(far.code == 3);
  CHECK(far.out.find("\"reject\":true") != std::string::npos);
  CHECK(far.out.find("\"statistic\"") != std::string::npos);

  const RunResult bad_kernel =
      run_cli("test --x " + (dir / "x.csv").string() + " --y " + (dir / "x.csv").string() +
              " --kernel gaussian --sigma -1");
  CHECK(bad_kernel.code == 1);  // invalid kernel is a contract violation
}

TEST_CASE("train writes the echo, trace and checkpoint") {
  const fs::path dir = scratch_root() / "train_cmd";
  fs::remove_all(dir);
  const RunResult r = run_cli("train --out " + dir.string() + kTinyTrainFlags);
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "config.echo"));
  CHECK(fs::exists(dir / "trace.csv"));
  CHECK(fs::exists(dir / "checkpoint.bin"));
  const std::string echo = slurp((dir / "config.echo").string());
  CHECK(echo.find("iters = 2") != std::string::npos);
  CHECK(echo.find("[kernel]") != std::string::npos);
}

TEST_CASE("train rejects bad configs and overrides with exit code 2") {
  const fs::path dir = scratch_root() / "train_bad";
  fs::create_directories(dir);
  write_file(dir / "bad.ini", "[train]\nwat = 3\n");
  const RunResult bad_cfg =
      run_cli("train --config " + (dir / "bad.ini").string() + " --out " + dir.string());
  CHECK(bad_cfg.code == 2);
  CHECK(bad_cfg.err.find("unknown key 'wat'") != std::string::npos);

  const RunResult bad_set = run_cli("train --set garbage --out " + dir.string());
  CHECK(bad_set.code == 2);
  CHECK(bad_set.err.find("section.key=value") != std::string::npos);
}

TEST_CASE("generation is deterministic and honors count zero") {
  const fs::path dir = scratch_root() / "gen_cmd";
  fs::remove_all(dir);
  REQUIRE(run_cli("train --out " + dir.string() + kTinyTrainFlags).code == 0);
  const std::string ckpt = (dir / "checkpoint.bin").string();

  const std::string s1 = (dir / "s1.csv").string();
  const std::string s2 = (dir / "s2.csv").string();
  CHECK(run_cli("gen --checkpoint " + ckpt + " --count 10 --seed 3 --out " + s1).code == 0);
  CHECK(run_cli("gen --checkpoint " + ckpt + " --count 10 --seed 3 --out " + s2).code == 0);
  const std::string body1 = slurp(s1);
  CHECK(!body1.empty());
  CHECK(body1 == slurp(s2));

  const std::string s3 = (dir / "s3.csv").string();
  CHECK(run_cli("gen --checkpoint " + ckpt + " --count 10 --seed 4 --out " + s3).code == 0);
  CHECK(slurp(s3) != body1);

  const std::string empty = (dir / "empty.csv").string();
  CHECK(run_cli("gen --checkpoint " + ckpt + " --count 0 --out " + empty).code == 0);
  CHECK(fs::exists(empty));
  CHECK(fs::file_size(empty) == 0);

  CHECK(run_cli("gen --checkpoint " + ckpt + " --count -1 --out " + s3).code == 1);
  CHECK(run_cli("gen --checkpoint " + ckpt + " --noise-family frob --out " + s3).code == 2);
  CHECK(run_cli("gen --checkpoint " + (dir / "missing.bin").string() + " --out " + s3).code == 1);
}

TEST_CASE("experiment rejects unknown names with the valid list") {
  const RunResult r = run_cli("experiment nope --out " + (scratch_root() / "exp").string());
  CHECK(r.code == 2);
  CHECK(r.err.find("unknown experiment 'nope'") != std::string::npos);
  CHECK(r.err.find("power") != std::string::npos);
  CHECK(r.err.find("coverage") != std::string::npos);
}

TEST_CASE("a run restarted from its config echo reproduces itself") {
  const fs::path dir1 = scratch_root() / "repro_1";
  const fs::path dir2 = scratch_root() / "repro_2";
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  REQUIRE(run_cli("train --out " + dir1.string() + kTinyTrainFlags).code == 0);
  REQUIRE(run_cli("train --config " + (dir1 / "config.echo").string() + " --out " +
                  dir2.string())
              .code == 0);

  CHECK(slurp((dir1 / "checkpoint.bin").string()) == slurp((dir2 / "checkpoint.bin").string()));
  const auto rows1 = trace_without_timing(slurp((dir1 / "trace.csv").string()));
  const auto rows2 = trace_without_timing(slurp((dir2 / "trace.csv").string()));
  REQUIRE(rows1.size() == rows2.size());
  CHECK(rows1 == rows2);
  CHECK(slurp((dir1 / "config.echo").string()) == slurp((dir2 / "config.echo").string()));
}

}  // TEST_SUITE
