#include "run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "toml.hpp"

namespace densedyn::cli {

namespace fs = std::filesystem;

ConfigError::ConfigError(const std::string& source, std::size_t line, const std::string& message)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + message), line_(line) {}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string to_string(AxisAlignment alignment) {
  switch (alignment) {
    case AxisAlignment::kSignOnly:
      return "sign";
    case AxisAlignment::kMatch:
      return "match";
    case AxisAlignment::kFixedBasis:
      return "fixed";
  }
  return "sign";
}

namespace {

std::size_t line_of(const toml::node& node) {
  const auto line = node.source().begin.line;
  return line == 0 ? 1 : line;
}

class Section {
 public:
  Section(const toml::table& table, std::string name, const std::string& source)
      : table_(table), name_(std::move(name)), source_(source) {}

  [[noreturn]] void fail(const toml::node& node, const std::string& message) const {
    throw ConfigError(source_, line_of(node), message);
  }
  [[noreturn]] void fail_key(std::string_view key, const std::string& message) const {
    const toml::node* node = table_.get(key);
    throw ConfigError(source_, node ? line_of(*node) : line_of(table_), qualified(key) + ": " + message);
  }
  [[noreturn]] void fail_section(const std::string& message) const {
    throw ConfigError(source_, line_of(table_), message);
  }
  std::string qualified(std::string_view key) const {
    return name_.empty() ? std::string(key) : name_ + "." + std::string(key);
  }
  std::size_t line() const { return line_of(table_); }

  const toml::node* node(std::string_view key) {
    seen_.insert(std::string(key));
    return table_.get(key);
  }

  const toml::table* table(std::string_view key) {
    const toml::node* n = node(key);
    if (!n) return nullptr;
    if (!n->is_table()) fail_key(key, "expected a table");
    return n->as_table();
  }

  void get(std::string_view key, double& out) {
    const toml::node* n = node(key);
    if (!n) return;
    if (!n->is_number()) fail_key(key, "expected a number");
    out = n->value<double>().value();
  }

  void get(std::string_view key, std::size_t& out) {
    const toml::node* n = node(key);
    if (!n) return;
    if (!n->is_integer()) fail_key(key, "expected an integer");
    const std::int64_t v = n->as_integer()->get();
    if (v < 0) fail_key(key, "must be non-negative");
    out = static_cast<std::size_t>(v);
  }

  void get(std::string_view key, int& out) {
    std::size_t v = static_cast<std::size_t>(std::max(out, 0));
    get(key, v);
    out = static_cast<int>(v);
  }

  void get(std::string_view key, std::string& out) {
    const toml::node* n = node(key);
    if (!n) return;
    if (!n->is_string()) fail_key(key, "expected a string");
    out = n->as_string()->get();
  }

  void get(std::string_view key, std::vector<double>& out) {
    const toml::node* n = node(key);
    if (!n) return;
    if (n->is_number()) {
      out = {n->value<double>().value()};
      return;
    }
    if (!n->is_array()) fail_key(key, "expected a number or an array of numbers");
    out.clear();
    for (const toml::node& item : *n->as_array()) {
      if (!item.is_number()) fail(item, qualified(key) + ": expected a number");
      out.push_back(item.value<double>().value());
    }
  }

  void get(std::string_view key, std::vector<std::string>& out) {
    const toml::node* n = node(key);
    if (!n) return;
    if (!n->is_array()) fail_key(key, "expected an array of strings");
    out.clear();
    for (const toml::node& item : *n->as_array()) {
      if (!item.is_string()) fail(item, qualified(key) + ": expected a string");
      out.push_back(item.as_string()->get());
    }
  }

  void reject_unknown() const {
    for (const auto& [key, value] : table_) {
      if (!seen_.count(std::string(key.str()))) fail(value, "unknown key '" + qualified(key.str()) + "'");
    }
  }

 private:
  const toml::table& table_;
  std::string name_;
  const std::string& source_;
  std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return fs::weakly_canonical(path.is_absolute() ? path : base / path);
}

SynthSpec parse_synth(Section& s) {
  SynthSpec spec;
  s.get("classes", spec.num_classes);
  s.get("exemplars_per_class", spec.exemplars_per_class);
  s.get("image_size", spec.image_size);
  s.get("prototype_seed", spec.prototype_seed);
  s.get("illumination", spec.illumination);
  s.get("jitter_px", spec.jitter_px);
  s.get("noise_sigma", spec.noise_sigma);
  s.get("class_contrast", spec.class_contrast);
  s.reject_unknown();
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    s.fail_section(std::string("dataset.synth: ") + e.what());
  }
  return spec;
}

std::vector<std::string> sorted_subdirectories(const fs::path& root) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

YaleSource parse_yale(Section& s, const fs::path& base) {
  YaleSource y;
  std::string root, crops;
  s.get("root", root);
  if (root.empty()) s.fail_key("root", "a data root is required");
  y.root = resolve(base, root);
  if (!fs::is_directory(y.root)) s.fail_key("root", "not a directory: " + y.root.string());
  s.get("crops", crops);
  if (!crops.empty()) {
    y.crops = resolve(base, crops);
    if (!fs::is_regular_file(*y.crops)) s.fail_key("crops", "no such file: " + y.crops->string());
  }
  s.get("identities", y.identities);
  s.get("classes", y.classes);
  s.get("image_size", y.image_size);
  s.reject_unknown();
  if (y.image_size == 0) s.fail_key("image_size", "must be positive");
  if (y.identities.empty()) {
    const auto names = sorted_subdirectories(y.root);
    if (names.size() < y.classes)
      s.fail_key("root", "found " + std::to_string(names.size()) + " identity directories, need " +
                             std::to_string(y.classes));
    y.identities.assign(names.begin(), names.begin() + static_cast<std::ptrdiff_t>(y.classes));
  }
  y.classes = y.identities.size();
  for (const auto& id : y.identities)
    if (!fs::is_directory(y.root / id)) s.fail_key("identities", "no directory for identity '" + id + "'");
  return y;
}

void parse_model(Section& s, DscConfig& m) {
  std::string optimizer = to_string(m.optimizer.kind);
  s.get("conv_layers", m.conv_layers);
  s.get("conv_channels", m.conv_channels);
  s.get("pool_out", m.pool_out);
  s.get("fc_width", m.fc_width);
  s.get("dropout", m.dropout_p);
  s.get("optimizer", optimizer);
  s.get("learning_rate", m.optimizer.learning_rate);
  s.get("beta1", m.optimizer.beta1);
  s.get("beta2", m.optimizer.beta2);
  s.get("epsilon", m.optimizer.epsilon);
  s.get("epochs", m.epochs);
  s.get("batch_size", m.batch_size);
  s.reject_unknown();
  try {
    m.optimizer.kind = parse_optimizer_kind(optimizer);
  } catch (const std::exception& e) {
    s.fail_key("optimizer", e.what());
  }
}

void parse_analysis(Section& s, AnalysisConfig& a) {
  std::string alignment = to_string(a.alignment);
  s.get("k_max", a.k_max);
  s.get("theta", a.theta);
  s.get("window", a.window);
  s.get("n_components", a.n_components);
  s.get("alignment", alignment);
  s.reject_unknown();
  if (a.k_max < 1) s.fail_key("k_max", "must be at least 1");
  if (!(a.theta > 0.0 && a.theta <= 1.0)) s.fail_key("theta", "must lie in (0, 1]");
  if (a.window < 1) s.fail_key("window", "must be at least 1");
  if (a.n_components < 2) s.fail_key("n_components", "must be at least 2");
  if (alignment == "sign") {
    a.alignment = AxisAlignment::kSignOnly;
  } else if (alignment == "match") {
    a.alignment = AxisAlignment::kMatch;
  } else if (alignment == "fixed") {
    a.alignment = AxisAlignment::kFixedBasis;
  } else {
    s.fail_key("alignment", "expected one of sign, match, fixed");
  }
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const std::string& source_name, const fs::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text, source_name);
  } catch (const toml::parse_error& e) {
    throw ConfigError(source_name, e.source().begin.line, std::string(e.description()));
  }

  RunConfig config;
  Section top(root, "", source_name);
  top.get("seed", config.seed);
  config.model.seed = config.seed;
  std::string output;
  top.get("output", output);
  if (output.empty()) throw ConfigError(source_name, 1, "missing required key 'output'");
  config.output = resolve(base_dir, output);

  const toml::table* dataset = top.table("dataset");
  if (!dataset) throw ConfigError(source_name, 1, "missing [dataset.synth] or [dataset.yale] section");
  Section ds(*dataset, "dataset", source_name);
  const toml::table* synth = ds.table("synth");
  const toml::table* yale = ds.table("yale");
  if (synth && yale) {
    const std::size_t later = std::max(line_of(*synth), line_of(*yale));
    throw ConfigError(source_name, later, "exactly one of [dataset.synth] and [dataset.yale] may be given");
  }
  if (!synth && !yale) throw ConfigError(source_name, ds.line(), "missing [dataset.synth] or [dataset.yale] section");
  if (synth) {
    Section s(*synth, "dataset.synth", source_name);
    config.synth = parse_synth(s);
  } else {
    Section s(*yale, "dataset.yale", source_name);
    config.yale = parse_yale(s, base_dir);
  }
  if (const toml::table* splits = ds.table("splits")) {
    Section s(*splits, "dataset.splits", source_name);
    s.get("heldout_fraction", config.splits.heldout_fraction);
    s.get("probe_per_class", config.splits.probe_per_class);
    s.reject_unknown();
    if (!(config.splits.heldout_fraction >= 0.0 && config.splits.heldout_fraction < 1.0))
      s.fail_key("heldout_fraction", "must lie in [0, 1)");
  }
  ds.reject_unknown();

  std::size_t model_line = 1;
  if (const toml::table* model = top.table("model")) {
    Section s(*model, "model", source_name);
    parse_model(s, config.model);
    model_line = s.line();
  }
  config.model.num_classes = config.synth ? config.synth->num_classes : config.yale->classes;
  config.model.image_size = config.synth ? config.synth->image_size : config.yale->image_size;
  try {
    config.model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source_name, model_line, std::string("model: ") + e.what());
  }

  if (const toml::table* analysis = top.table("analysis")) {
    Section s(*analysis, "analysis", source_name);
    parse_analysis(s, config.analysis);
  }
  top.reject_unknown();
  return config;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), 1, "cannot open config file");
  const std::string text{std::istreambuf_iterator<char>(in), {}};
  const fs::path base = fs::absolute(path).parent_path();
  return parse_run_config(text, path.string(), base);
}

namespace {

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + '"';
}

std::string number_list(const std::vector<double>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_number(v[i]);
  return out + "]";
}

std::string string_list(const std::vector<std::string>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + quote(v[i]);
  return out + "]";
}

// TOML requires a decimal point or exponent to read a float back as a float.
std::string toml_float(double v) {
  std::string s = format_number(v);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

}  // namespace

std::string to_toml(const RunConfig& c) {
  std::ostringstream o;
  o << "seed = " << c.seed << "\n";
  o << "output = " << quote(c.output.string()) << "\n\n";
  if (c.synth) {
    const SynthSpec& s = *c.synth;
    o << "[dataset.synth]\n";
    o << "classes = " << s.num_classes << "\n";
    o << "exemplars_per_class = " << s.exemplars_per_class << "\n";
    o << "image_size = " << s.image_size << "\n";
    o << "prototype_seed = " << s.prototype_seed << "\n";
    o << "illumination = " << toml_float(s.illumination) << "\n";
    o << "jitter_px = " << s.jitter_px << "\n";
    o << "noise_sigma = " << toml_float(s.noise_sigma) << "\n";
    std::vector<double> contrast = s.class_contrast;
    o << "class_contrast = " << number_list(contrast) << "\n\n";
  } else {
    const YaleSource& y = *c.yale;
    o << "[dataset.yale]\n";
    o << "root = " << quote(y.root.string()) << "\n";
    if (y.crops) o << "crops = " << quote(y.crops->string()) << "\n";
    o << "identities = " << string_list(y.identities) << "\n";
    o << "image_size = " << y.image_size << "\n\n";
  }
  o << "[dataset.splits]\n";
  o << "heldout_fraction = " << toml_float(c.splits.heldout_fraction) << "\n";
  o << "probe_per_class = " << c.splits.probe_per_class << "\n\n";
  const DscConfig& m = c.model;
  o << "[model]\n";
  o << "conv_layers = " << m.conv_layers << "\n";
  o << "conv_channels = " << m.conv_channels << "\n";
  o << "pool_out = " << m.pool_out << "\n";
  o << "fc_width = " << m.fc_width << "\n";
  o << "dropout = " << toml_float(m.dropout_p) << "\n";
  o << "optimizer = " << quote(to_string(m.optimizer.kind)) << "\n";
  o << "learning_rate = " << toml_float(m.optimizer.learning_rate) << "\n";
  o << "beta1 = " << toml_float(m.optimizer.beta1) << "\n";
  o << "beta2 = " << toml_float(m.optimizer.beta2) << "\n";
  o << "epsilon = " << toml_float(m.optimizer.epsilon) << "\n";
  o << "epochs = " << m.epochs << "\n";
  o << "batch_size = " << m.batch_size << "\n\n";
  const AnalysisConfig& a = c.analysis;
  o << "[analysis]\n";
  o << "k_max = " << a.k_max << "\n";
  o << "theta = " << toml_float(a.theta) << "\n";
  o << "window = " << a.window << "\n";
  o << "n_components = " << a.n_components << "\n";
  o << "alignment = " << quote(to_string(a.alignment)) << "\n";
  return o.str();
}

std::vector<std::pair<std::string, std::string>> config_echo(const RunConfig& c) {
  std::vector<std::pair<std::string, std::string>> out;
  out.emplace_back("seed", std::to_string(c.seed));
  if (c.synth) {
    out.emplace_back("dataset", "synth");
    out.emplace_back("dataset.synth.exemplars_per_class", std::to_string(c.synth->exemplars_per_class));
    out.emplace_back("dataset.synth.illumination", format_number(c.synth->illumination));
    out.emplace_back("dataset.synth.jitter_px", std::to_string(c.synth->jitter_px));
    out.emplace_back("dataset.synth.noise_sigma", format_number(c.synth->noise_sigma));
    out.emplace_back("dataset.synth.class_contrast", number_list(c.synth->class_contrast));
  } else {
    out.emplace_back("dataset", "yale");
    out.emplace_back("dataset.yale.root", c.yale->root.string());
    out.emplace_back("dataset.yale.identities", string_list(c.yale->identities));
  }
  const DscConfig& m = c.model;
  out.emplace_back("model.num_classes", std::to_string(m.num_classes));
  out.emplace_back("model.image_size", std::to_string(m.image_size));
  out.emplace_back("model.fc_width", std::to_string(m.fc_width));
  out.emplace_back("model.pool_out", std::to_string(m.pool_out));
  out.emplace_back("model.optimizer", to_string(m.optimizer.kind));
  out.emplace_back("model.learning_rate", format_number(m.optimizer.learning_rate));
  out.emplace_back("model.epochs", std::to_string(m.epochs));
  out.emplace_back("model.batch_size", std::to_string(m.batch_size));
  out.emplace_back("model.dropout", format_number(m.dropout_p));
  out.emplace_back("run_config", to_toml(c));
  return out;
}

DenseDataset load_dataset(const RunConfig& config) {
  if (config.synth) return synth_generate(*config.synth, config.seed, config.splits);
  const YaleSource& y = *config.yale;
  AssembleOptions opt;
  opt.identities = y.identities;
  if (y.crops) opt.crops = load_crop_table(*y.crops);
  opt.image_size = y.image_size;
  opt.splits = config.splits;
  opt.seed = config.seed;
  return assemble_dataset(y.root, opt);
}

DscConfig model_config(const RunConfig& config, const DenseDataset& dataset) {
  DscConfig m = config.model;
  m.num_classes = dataset.num_classes();
  m.image_size = dataset.image_size();
  m.seed = config.seed;
  return m;
}

}  // namespace densedyn::cli
