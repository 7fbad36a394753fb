#include "mmdforge/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "mmdforge/errors.hpp"

namespace mmdforge {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct KeyError {
  std::string message;  // rethrown by the parser with file/line/key context
};

double parse_double(const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || v.empty() || errno == ERANGE || !std::isfinite(out)) {
    throw KeyError{"expected a real number, got '" + v + "'"};
  }
  return out;
}

long long parse_int(const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const long long out = std::strtoll(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || v.empty() || errno == ERANGE) {
    throw KeyError{"expected an integer, got '" + v + "'"};
  }
  return out;
}

std::uint64_t parse_u64(const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long out = std::strtoull(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || v.empty() || errno == ERANGE || v.front() == '-') {
    throw KeyError{"expected an unsigned integer, got '" + v + "'"};
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(trim(item)));
  if (out.empty()) throw KeyError{"expected a comma-separated list"};
  return out;
}

std::vector<Eigen::Index> parse_index_list(const std::string& v) {
  std::vector<Eigen::Index> out;
  for (double d : parse_double_list(v)) {
    if (d != std::floor(d) || d < 1) throw KeyError{"expected positive integers"};
    out.push_back(static_cast<Eigen::Index>(d));
  }
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += fmt_double(v[i]);
  }
  return out;
}

std::string join(const std::vector<Eigen::Index>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

// ---- enum <-> text ----

template <typename T>
struct EnumEntry {
  const char* name;
  T value;
};

template <typename T, std::size_t N>
T enum_from(const std::string& v, const EnumEntry<T> (&table)[N], const char* what) {
  for (const auto& e : table) {
    if (v == e.name) return e.value;
  }
  std::string names;
  for (const auto& e : table) {
    if (!names.empty()) names += ", ";
    names += e.name;
  }
  throw KeyError{std::string("unknown ") + what + " '" + v + "' (one of: " + names + ")"};
}

template <typename T, std::size_t N>
std::string enum_to(T v, const EnumEntry<T> (&table)[N]) {
  for (const auto& e : table) {
    if (v == e.value) return e.name;
  }
  throw ContractError("config: unserializable enum value");
}

constexpr EnumEntry<DataSource> kSources[] = {
    {"gaussian_grid", DataSource::GaussianGrid}, {"gaussian_ring", DataSource::GaussianRing},
    {"two_moons", DataSource::TwoMoons},         {"swiss_roll_2d", DataSource::SwissRoll2d},
    {"file", DataSource::File},
};
constexpr EnumEntry<NoiseFamily> kNoiseFamilies[] = {
    {"standard_normal", NoiseFamily::StandardNormal},
    {"uniform", NoiseFamily::Uniform},
};
constexpr EnumEntry<Activation> kActivations[] = {
    {"relu", Activation::Relu}, {"tanh", Activation::Tanh}, {"elu", Activation::Elu}};
constexpr EnumEntry<TrainMode> kModes[] = {{"mmdgan", TrainMode::MmdGan},
                                           {"gmmn_d", TrainMode::GmmnD},
                                           {"gmmn_c", TrainMode::GmmnC},
                                           {"wgan_linear", TrainMode::WganLinear}};
constexpr EnumEntry<LipschitzMode> kLipschitz[] = {{"clip", LipschitzMode::Clip},
                                                   {"gradient_penalty", LipschitzMode::GradientPenalty},
                                                   {"none", LipschitzMode::None}};
constexpr EnumEntry<EstimatorKind> kEstimators[] = {{"biased", EstimatorKind::Biased},
                                                    {"unbiased", EstimatorKind::Unbiased}};
constexpr EnumEntry<KernelFamily> kFamilies[] = {{"gaussian", KernelFamily::Gaussian},
                                                 {"mixture_rbf", KernelFamily::MixtureRbf},
                                                 {"linear", KernelFamily::Linear},
                                                 {"polynomial", KernelFamily::Polynomial}};
constexpr EnumEntry<RbfScaling> kScalings[] = {{"two_sigma_sq", RbfScaling::TwoSigmaSq},
                                               {"sigma", RbfScaling::Sigma},
                                               {"sigma_sq", RbfScaling::SigmaSq}};

// ---- key tables ----

struct KeyHandler {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

using Section = std::map<std::string, KeyHandler>;

Section data_section() {
  Section s;
  s["source"] = {[](RunConfig& c, const std::string& v) {
                   c.data.source = enum_from(v, kSources, "source");
                 },
                 [](const RunConfig& c) { return enum_to(c.data.source, kSources); }};
  s["dimension"] = {[](RunConfig& c, const std::string& v) {
                      c.data.dimension = static_cast<Eigen::Index>(parse_int(v));
                    },
                    [](const RunConfig& c) { return std::to_string(c.data.dimension); }};
  s["samples"] = {[](RunConfig& c, const std::string& v) {
                    c.data.samples = static_cast<Eigen::Index>(parse_int(v));
                  },
                  [](const RunConfig& c) { return std::to_string(c.data.samples); }};
  s["split_fraction"] = {[](RunConfig& c, const std::string& v) {
                           c.data.split_fraction = parse_double(v);
                         },
                         [](const RunConfig& c) { return fmt_double(c.data.split_fraction); }};
  s["seed"] = {[](RunConfig& c, const std::string& v) { c.data.seed = parse_u64(v); },
               [](const RunConfig& c) { return std::to_string(c.data.seed); }};
  s["grid_rows"] = {[](RunConfig& c, const std::string& v) {
                      c.data.grid_rows = static_cast<int>(parse_int(v));
                    },
                    [](const RunConfig& c) { return std::to_string(c.data.grid_rows); }};
  s["grid_cols"] = {[](RunConfig& c, const std::string& v) {
                      c.data.grid_cols = static_cast<int>(parse_int(v));
                    },
                    [](const RunConfig& c) { return std::to_string(c.data.grid_cols); }};
  s["grid_spacing"] = {[](RunConfig& c, const std::string& v) {
                         c.data.grid_spacing = parse_double(v);
                       },
                       [](const RunConfig& c) { return fmt_double(c.data.grid_spacing); }};
  s["modes"] = {[](RunConfig& c, const std::string& v) {
                  c.data.modes = static_cast<int>(parse_int(v));
                },
                [](const RunConfig& c) { return std::to_string(c.data.modes); }};
  s["radius"] = {[](RunConfig& c, const std::string& v) { c.data.radius = parse_double(v); },
                 [](const RunConfig& c) { return fmt_double(c.data.radius); }};
  s["sigma"] = {[](RunConfig& c, const std::string& v) { c.data.sigma = parse_double(v); },
                [](const RunConfig& c) { return fmt_double(c.data.sigma); }};
  s["noise"] = {[](RunConfig& c, const std::string& v) { c.data.noise = parse_double(v); },
                [](const RunConfig& c) { return fmt_double(c.data.noise); }};
  s["path"] = {[](RunConfig& c, const std::string& v) { c.data.path = v; },
               [](const RunConfig& c) { return c.data.path; }};
  return s;
}

Section noise_section() {
  Section s;
  s["family"] = {[](RunConfig& c, const std::string& v) {
                   c.noise.family = enum_from(v, kNoiseFamilies, "noise family");
                 },
                 [](const RunConfig& c) { return enum_to(c.noise.family, kNoiseFamilies); }};
  s["dimension"] = {[](RunConfig& c, const std::string& v) {
                      c.noise.dimension = static_cast<Eigen::Index>(parse_int(v));
                    },
                    [](const RunConfig& c) { return std::to_string(c.noise.dimension); }};
  return s;
}

Section model_section() {
  Section s;
  s["gen_hidden"] = {[](RunConfig& c, const std::string& v) {
                       c.model.gen_hidden = parse_index_list(v);
                     },
                     [](const RunConfig& c) { return join(c.model.gen_hidden); }};
  s["enc_hidden"] = {[](RunConfig& c, const std::string& v) {
                       c.model.enc_hidden = parse_index_list(v);
                     },
                     [](const RunConfig& c) { return join(c.model.enc_hidden); }};
  s["code_dim"] = {[](RunConfig& c, const std::string& v) {
                     c.model.code_dim = static_cast<Eigen::Index>(parse_int(v));
                   },
                   [](const RunConfig& c) { return std::to_string(c.model.code_dim); }};
  s["activation"] = {[](RunConfig& c, const std::string& v) {
                       c.model.activation = enum_from(v, kActivations, "activation");
                     },
                     [](const RunConfig& c) { return enum_to(c.model.activation, kActivations); }};
  return s;
}

Section train_section() {
  Section s;
  s["mode"] = {[](RunConfig& c, const std::string& v) {
                 c.train.mode = enum_from(v, kModes, "mode");
               },
               [](const RunConfig& c) { return enum_to(c.train.mode, kModes); }};
  s["lipschitz"] = {[](RunConfig& c, const std::string& v) {
                      c.train.lipschitz = enum_from(v, kLipschitz, "lipschitz mode");
                    },
                    [](const RunConfig& c) { return enum_to(c.train.lipschitz, kLipschitz); }};
  s["clip"] = {[](RunConfig& c, const std::string& v) { c.train.clip = parse_double(v); },
               [](const RunConfig& c) { return fmt_double(c.train.clip); }};
  s["lambda_gp"] = {[](RunConfig& c, const std::string& v) { c.train.lambda_gp = parse_double(v); },
                    [](const RunConfig& c) { return fmt_double(c.train.lambda_gp); }};
  s["lambda_ae"] = {[](RunConfig& c, const std::string& v) { c.train.lambda_ae = parse_double(v); },
                    [](const RunConfig& c) { return fmt_double(c.train.lambda_ae); }};
  s["lambda_fsr"] = {[](RunConfig& c, const std::string& v) {
                       c.train.lambda_fsr = parse_double(v);
                     },
                     [](const RunConfig& c) { return fmt_double(c.train.lambda_fsr); }};
  s["batch_size"] = {[](RunConfig& c, const std::string& v) {
                       c.train.batch_size = static_cast<Eigen::Index>(parse_int(v));
                     },
                     [](const RunConfig& c) { return std::to_string(c.train.batch_size); }};
  s["n_critic"] = {[](RunConfig& c, const std::string& v) {
                     c.train.n_critic = static_cast<int>(parse_int(v));
                   },
                   [](const RunConfig& c) { return std::to_string(c.train.n_critic); }};
  s["iters"] = {[](RunConfig& c, const std::string& v) {
                  c.train.iters = static_cast<int>(parse_int(v));
                },
                [](const RunConfig& c) { return std::to_string(c.train.iters); }};
  s["learning_rate"] = {[](RunConfig& c, const std::string& v) {
                          c.train.learning_rate = parse_double(v);
                        },
                        [](const RunConfig& c) { return fmt_double(c.train.learning_rate); }};
  s["seed"] = {[](RunConfig& c, const std::string& v) { c.train.seed = parse_u64(v); },
               [](const RunConfig& c) { return std::to_string(c.train.seed); }};
  s["estimator"] = {[](RunConfig& c, const std::string& v) {
                      c.train.train_estimator = enum_from(v, kEstimators, "estimator");
                    },
                    [](const RunConfig& c) {
                      return enum_to(c.train.train_estimator, kEstimators);
                    }};
  s["eval_every"] = {[](RunConfig& c, const std::string& v) {
                       c.train.eval_every = static_cast<int>(parse_int(v));
                     },
                     [](const RunConfig& c) { return std::to_string(c.train.eval_every); }};
  s["pretrain_iters"] = {[](RunConfig& c, const std::string& v) {
                           c.train.pretrain_iters = static_cast<int>(parse_int(v));
                         },
                         [](const RunConfig& c) { return std::to_string(c.train.pretrain_iters); }};
  s["pretrain_lr"] = {[](RunConfig& c, const std::string& v) {
                        c.train.pretrain_lr = parse_double(v);
                      },
                      [](const RunConfig& c) { return fmt_double(c.train.pretrain_lr); }};
  return s;
}

// Shared schema for [kernel] and [eval]; composed kernels are built at
// runtime from a trained encoder and are not file-addressable.
Section kernel_section(bool eval) {
  auto pick = [eval](RunConfig& c) -> KernelSpec& {
    return eval ? c.train.eval_kernel : c.train.kernel;
  };
  auto cpick = [eval](const RunConfig& c) -> const KernelSpec& {
    return eval ? c.train.eval_kernel : c.train.kernel;
  };
  Section s;
  s["family"] = {[pick](RunConfig& c, const std::string& v) {
                   pick(c).family = enum_from(v, kFamilies, "kernel family");
                 },
                 [cpick](const RunConfig& c) { return enum_to(cpick(c).family, kFamilies); }};
  s["sigma"] = {[pick](RunConfig& c, const std::string& v) { pick(c).sigma = parse_double(v); },
                [cpick](const RunConfig& c) { return fmt_double(cpick(c).sigma); }};
  s["sigmas"] = {[pick](RunConfig& c, const std::string& v) {
                   pick(c).sigmas = parse_double_list(v);
                 },
                 [cpick](const RunConfig& c) { return join(cpick(c).sigmas); }};
  s["degree"] = {[pick](RunConfig& c, const std::string& v) {
                   pick(c).degree = static_cast<int>(parse_int(v));
                 },
                 [cpick](const RunConfig& c) { return std::to_string(cpick(c).degree); }};
  s["offset"] = {[pick](RunConfig& c, const std::string& v) { pick(c).offset = parse_double(v); },
                 [cpick](const RunConfig& c) { return fmt_double(cpick(c).offset); }};
  s["rbf_scaling"] = {[pick](RunConfig& c, const std::string& v) {
                        pick(c).rbf_scaling = enum_from(v, kScalings, "rbf scaling");
                      },
                      [cpick](const RunConfig& c) {
                        return enum_to(cpick(c).rbf_scaling, kScalings);
                      }};
  return s;
}

const std::vector<std::pair<std::string, Section>>& schema() {
  static const std::vector<std::pair<std::string, Section>> s = [] {
    std::vector<std::pair<std::string, Section>> out;
    out.emplace_back("data", data_section());
    out.emplace_back("noise", noise_section());
    out.emplace_back("model", model_section());
    out.emplace_back("train", train_section());
    out.emplace_back("kernel", kernel_section(false));
    out.emplace_back("eval", kernel_section(true));
    return out;
  }();
  return s;
}

const Section* find_section(const std::string& name) {
  for (const auto& [sec_name, sec] : schema()) {
    if (sec_name == name) return &sec;
  }
  return nullptr;
}

}  // namespace

RunConfig default_config() { return RunConfig{}; }

RunConfig parse_config(const std::string& text, const std::string& source_name) {
  RunConfig cfg = default_config();
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  const Section* current = nullptr;
  std::string current_name;
  std::map<std::string, int> seen;

  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#' || t.front() == ';') continue;
    const std::string at = source_name + ":" + std::to_string(line_no);
    if (t.front() == '[') {
      if (t.back() != ']') throw ParseError(at + ": unterminated section header");
      current_name = trim(t.substr(1, t.size() - 2));
      current = find_section(current_name);
      if (current == nullptr) {
        throw ParseError(at + ": unknown section '" + current_name + "'");
      }
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(at + ": expected 'key = value'");
    if (current == nullptr) throw ParseError(at + ": key outside any section");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const auto it = current->find(key);
    if (it == current->end()) {
      throw ParseError(at + ": unknown key '" + key + "' in section [" + current_name + "]");
    }
    const std::string qualified = current_name + "." + key;
    if (++seen[qualified] > 1) throw ParseError(at + ": duplicate key '" + key + "'");
    try {
      it->second.set(cfg, value);
    } catch (const KeyError& e) {
      throw ParseError(at + ": key '" + key + "': " + e.message);
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw IoError(path + ": cannot open");
  std::string text((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  return parse_config(text, path);
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [name, section] : schema()) {
    out += "[" + name + "]\n";
    for (const auto& [key, handler] : section) {
      out += key + " = " + handler.get(cfg) + "\n";
    }
    out += "\n";
  }
  return out;
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ParseError("override '" + assignment + "': expected section.key=value");
  }
  const std::string path = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  const std::size_t dot = path.find('.');
  if (dot == std::string::npos) {
    throw ParseError("override '" + assignment + "': expected section.key=value");
  }
  const std::string sec_name = path.substr(0, dot);
  const std::string key = path.substr(dot + 1);
  const Section* section = find_section(sec_name);
  if (section == nullptr) throw ParseError("override: unknown section '" + sec_name + "'");
  const auto it = section->find(key);
  if (it == section->end()) {
    throw ParseError("override: unknown key '" + key + "' in section [" + sec_name + "]");
  }
  try {
    it->second.set(cfg, value);
  } catch (const KeyError& e) {
    throw ParseError("override: key '" + key + "': " + e.message);
  }
}

}  // namespace mmdforge
