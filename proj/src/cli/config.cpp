#include "cephlm/cli/config.hpp"

#include <cctype>
#include <charconv>
#include <set>
#include <sstream>

#include "cephlm/error.hpp"
#include "cephlm/binary_io.hpp"

namespace cephlm::cli {

using nlohmann::json;

namespace {

[[noreturn]] void config_fail(const std::string& msg) { throw Error(Errc::config_error, msg); }

bool is_bare_key_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; }

class ValueParser {
 public:
  ValueParser(std::string_view text, std::size_t line) : s_(text), line_(line) {}

  json parse_all() {
    json v = value();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected text after value");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    config_fail("line " + std::to_string(line_) + ": " + msg);
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  json value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return string();
    if (c == '[') return array();
    std::size_t end = pos_;
    while (end < s_.size() && s_[end] != ',' && s_[end] != ']' && !std::isspace(static_cast<unsigned char>(s_[end]))) {
      ++end;
    }
    const std::string_view tok = s_.substr(pos_, end - pos_);
    pos_ = end;
    if (tok == "true") return true;
    if (tok == "false") return false;
    return number(tok);
  }

  json number(std::string_view tok) {
    std::string_view t = tok;
    if (!t.empty() && t[0] == '+') t.remove_prefix(1);
    const bool is_int = !t.empty() && t.find_first_not_of("-0123456789") == std::string_view::npos;
    if (is_int) {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
      if (ec == std::errc() && p == t.data() + t.size()) {
        if (v >= 0) return static_cast<std::uint64_t>(v);
        return v;
      }
      std::uint64_t u = 0;
      auto [p2, ec2] = std::from_chars(t.data(), t.data() + t.size(), u);
      if (ec2 == std::errc() && p2 == t.data() + t.size()) return u;
    }
    double d = 0.0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), d);
    if (ec != std::errc() || p != t.data() + t.size() || t.empty()) fail("invalid value '" + std::string(tok) + "'");
    return d;
  }

  json string() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) break;
        const char e = s_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      }
      out.push_back(c);
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  json array() {
    ++pos_;
    json out = json::array();
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return out;
    }
    for (;;) {
      out.push_back(value());
      skip_ws();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ',') {
        ++pos_;
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ']') {
          ++pos_;
          return out;
        }
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return out;
      }
      fail("expected , or ] in array");
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  std::size_t line_;
};

// Text before an unquoted '#'.
std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

int bracket_balance(const std::string& s) {
  int depth = 0;
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_str = !in_str;
    if (in_str) continue;
    if (s[i] == '[') ++depth;
    if (s[i] == ']') --depth;
  }
  return depth;
}

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

std::string parse_key(const std::string& raw, std::size_t line) {
  const std::string k = trim(raw);
  if (k.size() >= 2 && k.front() == '"' && k.back() == '"') return k.substr(1, k.size() - 2);
  if (k.empty() || !std::all_of(k.begin(), k.end(), is_bare_key_char)) {
    config_fail("line " + std::to_string(line) + ": invalid key '" + k + "'");
  }
  return k;
}

}  // namespace

json parse_toml(const std::string& text) {
  json root = json::object();
  json* table = &root;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) config_fail("line " + std::to_string(line_no) + ": bad table header");
      table = &root;
      std::stringstream parts(line.substr(1, line.size() - 2));
      std::string part;
      while (std::getline(parts, part, '.')) {
        const std::string key = parse_key(part, line_no);
        json& next = (*table)[key];
        if (next.is_null()) next = json::object();
        if (!next.is_object()) config_fail("line " + std::to_string(line_no) + ": '" + key + "' is not a table");
        table = &next;
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) config_fail("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = parse_key(line.substr(0, eq), line_no);
    std::string value = line.substr(eq + 1);
    const std::size_t start = line_no;
    while (bracket_balance(value) > 0 && std::getline(in, raw)) {
      ++line_no;
      value += " " + strip_comment(raw);
    }
    if (table->contains(key)) config_fail("line " + std::to_string(start) + ": duplicate key '" + key + "'");
    (*table)[key] = ValueParser(value, start).parse_all();
  }
  return root;
}

namespace {

std::string toml_key(const std::string& k) {
  if (!k.empty() && std::all_of(k.begin(), k.end(), is_bare_key_char)) return k;
  return json(k).dump();
}

std::string toml_value(const json& v) {
  if (v.is_string()) return v.dump();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_float()) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v.get<double>());
    std::string s(buf, p);
    if (s.find_first_of(".e") == std::string::npos) s += ".0";
    return s;
  }
  if (v.is_array()) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i].is_object()) config_fail("arrays of tables are not supported");
      out += (i ? ", " : "") + toml_value(v[i]);
    }
    return out + "]";
  }
  config_fail("unsupported value in config tree");
}

void emit_table(std::ostringstream& out, const json& t, const std::string& path) {
  bool header = path.empty();
  for (const auto& [k, v] : t.items()) {
    if (v.is_object()) continue;
    if (!header) {
      out << "\n[" << path << "]\n";
      header = true;
    }
    out << toml_key(k) << " = " << toml_value(v) << '\n';
  }
  for (const auto& [k, v] : t.items()) {
    if (!v.is_object()) continue;
    const std::string sub = path.empty() ? toml_key(k) : path + "." + toml_key(k);
    bool has_scalar = false;
    for (const auto& [k2, v2] : v.items()) has_scalar = has_scalar || !v2.is_object();
    if (!has_scalar) out << "\n[" << sub << "]\n";
    emit_table(out, v, sub);
  }
}

// Typed access to one table that remembers which keys were consumed.
class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) config_fail("'" + path_ + "' must be a table");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!obj_.contains(key)) return;
    used_.insert(key);
    const json& v = obj_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("expected a boolean");
        out = v.get<bool>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("expected a string");
        out = v.get<std::string>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_unsigned()) throw std::invalid_argument("expected a non-negative integer");
        out = static_cast<T>(v.get<std::uint64_t>());
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw std::invalid_argument("expected a number");
        out = v.get<T>();
      } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
        T tmp;
        if (!v.is_array()) throw std::invalid_argument("expected an array of integers");
        for (const auto& e : v) {
          if (!e.is_number_unsigned()) throw std::invalid_argument("expected an array of integers");
          tmp.push_back(e.get<std::size_t>());
        }
        out = tmp;
      } else {
        T tmp;
        if (!v.is_array()) throw std::invalid_argument("expected an array of [w, h] pairs");
        for (const auto& e : v) {
          if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
            throw std::invalid_argument("expected an array of [w, h] pairs");
          }
          tmp.emplace_back(e[0].get<double>(), e[1].get<double>());
        }
        out = tmp;
      }
    } catch (const std::exception& e) {
      config_fail(path_ + "." + key + ": " + e.what());
    }
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  Reader table(const std::string& key) {
    used_.insert(key);
    static const json empty = json::object();
    return Reader(obj_.contains(key) ? obj_.at(key) : empty, path_.empty() ? key : path_ + "." + key);
  }

  const json& raw() const { return obj_; }

  void finish() const {
    for (const auto& [k, v] : obj_.items()) {
      if (!used_.count(k)) config_fail("unknown config key '" + (path_.empty() ? k : path_ + "." + k) + "'");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> used_;
};

json arch_json(const nets::ModelArch& a) {
  return {{"conv_channels", a.conv_channels}, {"kernel", a.kernel}, {"fc_width", a.fc_width}};
}

json train_json(const nets::TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"lr", t.adam.lr},
          {"beta1", t.adam.beta1},
          {"beta2", t.adam.beta2},
          {"epsilon", t.adam.epsilon},
          {"validation_fraction", t.validation_fraction},
          {"early_stop_patience", t.early_stop_patience},
          {"augment", t.augment},
          {"max_rotation_deg", t.augment_cfg.max_rotation_deg},
          {"gamma_min", t.augment_cfg.gamma_min},
          {"gamma_max", t.augment_cfg.gamma_max}};
}

json pairs_json(const std::vector<std::pair<double, double>>& v) {
  json out = json::array();
  for (const auto& [a, b] : v) out.push_back({a, b});
  return out;
}

void read_model(Reader r, nets::ModelArch& a, nets::TrainConfig& t) {
  r.get("conv_channels", a.conv_channels);
  r.get("kernel", a.kernel);
  r.get("fc_width", a.fc_width);
  r.get("epochs", t.epochs);
  r.get("batch_size", t.batch_size);
  r.get("lr", t.adam.lr);
  r.get("beta1", t.adam.beta1);
  r.get("beta2", t.adam.beta2);
  r.get("epsilon", t.adam.epsilon);
  r.get("validation_fraction", t.validation_fraction);
  r.get("early_stop_patience", t.early_stop_patience);
  r.get("augment", t.augment);
  r.get("max_rotation_deg", t.augment_cfg.max_rotation_deg);
  r.get("gamma_min", t.augment_cfg.gamma_min);
  r.get("gamma_max", t.augment_cfg.gamma_max);
  r.finish();
}

patchset::LandmarkCatalog base_catalog(const std::string& name) {
  if (name == "synth") return synth::synth_catalog(80.0, 144.0, 4);
  if (name == "clinical") return patchset::LandmarkCatalog::clinical_default();
  config_fail("catalog must be synth or clinical, got '" + name + "'");
}

void merge_into(json& base, const json& over) {
  for (const auto& [k, v] : over.items()) {
    if (v.is_object() && base.contains(k) && base[k].is_object()) {
      merge_into(base[k], v);
    } else {
      base[k] = v;
    }
  }
}

}  // namespace

std::string to_toml(const json& doc) {
  std::ostringstream out;
  emit_table(out, doc, "");
  std::string s = out.str();
  if (!s.empty() && s.front() == '\n') s.erase(0, 1);
  return s;
}

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.seed = 1;
  c.catalog = base_catalog("synth");
  c.sampling.background_per_case = 6;
  c.sampling.background.scale_min = 80.0;
  c.sampling.background.scale_max = 144.0;
  for (auto* a : {&c.pc_arch, &c.pe_arch}) {
    a->conv_channels = {4, 8, 16};
    a->fc_width = 32;
  }
  c.pc_arch.kind = nets::ModelKind::pc;
  c.pe_arch.kind = nets::ModelKind::pe;
  for (auto* t : {&c.pc_train, &c.pe_train}) {
    t->batch_size = 32;
    t->adam.lr = 2e-3;
    t->augment = false;
  }
  c.pc_train.epochs = 5;
  c.pe_train.epochs = 10;
  c.scan.scale_set = {{80, 80}, {112, 112}, {144, 144}};
  return c;
}

CrossValConfig RunConfig::crossval() const {
  CrossValConfig cv;
  cv.folds = folds;
  cv.seed = seed;
  cv.pc_arch = pc_arch;
  cv.pc_arch.kind = nets::ModelKind::pc;
  cv.pc_arch.num_classes = catalog.size() + 1;
  cv.pe_arch = pe_arch;
  cv.pe_arch.kind = nets::ModelKind::pe;
  cv.pc_train = pc_train;
  cv.pe_train = pe_train;
  cv.sampling = sampling;
  cv.scan = scan;
  cv.scan.jobs = jobs;
  cv.alpha_limit = alpha;
  cv.jobs = jobs;
  return cv;
}

void RunConfig::validate() const {
  try {
    if (jobs < 1) config_fail("jobs must be >= 1");
    if (catalog.size() == 0) config_fail("the landmark catalog is empty");
    for (const auto& s : catalog.specs()) s.validate();
    synth.validate();
    const auto cv = crossval();
    cv.pc_arch.validate();
    cv.pe_arch.validate();
    if (pc_arch.input_size != patchset::kPatchSize || pe_arch.input_size != patchset::kPatchSize) {
      config_fail("models consume 64x64 patches");
    }
    pc_train.validate();
    pe_train.validate();
    scan.validate();
    if (folds < 2) config_fail("eval.folds must be >= 2");
    if (!(alpha > 0.0 && alpha < 1.0)) config_fail("eval.alpha must be in (0, 1)");
    if (observers < 3) config_fail("synth.observers must be >= 3");
    evalkit::parse_report_format(report_format);
  } catch (const Error& e) {
    if (e.code() == Errc::config_error) throw;
    throw Error(Errc::config_error, e.what());
  }
}

json to_json(const RunConfig& c) {
  json doc;
  doc["seed"] = c.seed;
  doc["jobs"] = c.jobs;
  doc["precision"] = c.precision == Precision::f32 ? "f32" : "f64";
  doc["catalog"] = c.catalog_name;
  doc["synth"] = {{"n_cases", c.n_cases},
                  {"width", c.synth.width},
                  {"height", c.synth.height},
                  {"pixel_spacing_mm", c.synth.pixel_spacing_mm},
                  {"variation_px", c.synth.variation_px},
                  {"noise_std", c.synth.noise_std},
                  {"blur_sigma", c.synth.blur_sigma},
                  {"decoy", c.synth.decoy},
                  {"observers", c.observers},
                  {"observer_cases", c.observer_cases}};
  doc["sampling"] = {{"background_per_case", c.sampling.background_per_case},
                     {"background_scale_min", c.sampling.background.scale_min},
                     {"background_scale_max", c.sampling.background.scale_max},
                     {"background_min_dist_px", c.sampling.background.min_dist_px},
                     {"background_max_attempts", c.sampling.background.max_attempts_per_patch}};
  doc["pc"] = arch_json(c.pc_arch);
  merge_into(doc["pc"], train_json(c.pc_train));
  doc["pe"] = arch_json(c.pe_arch);
  merge_into(doc["pe"], train_json(c.pe_train));
  doc["scan"] = {{"grid_stride_px", c.scan.grid_stride_px},
                 {"scales", pairs_json(c.scan.scale_set)},
                 {"pc_confidence_threshold", c.scan.pc_confidence_threshold},
                 {"aggregation", std::string(pipeline::aggregation_name(c.scan.aggregation))},
                 {"outlier_k", c.scan.outlier_k},
                 {"select_larger_cluster", c.scan.select_larger_cluster},
                 {"soft_filter", c.scan.soft_filter},
                 {"soft_filter_scales", c.scan.soft_filter_scales},
                 {"batch_size", c.scan.batch_size}};
  doc["eval"] = {{"folds", c.folds}, {"alpha", c.alpha}, {"format", c.report_format}};
  json lm = json::object();
  for (const auto& s : c.catalog.specs()) {
    lm[s.name] = {{"tissue", std::string(patchset::tissue_name(s.tissue))},
                  {"scale_min", s.scale_min},
                  {"scale_max", s.scale_max},
                  {"patches_per_image", s.patches_per_image},
                  {"aspects", pairs_json(s.aspect_set)}};
  }
  doc["landmarks"] = lm;
  return doc;
}

RunConfig from_json(const json& doc) {
  RunConfig c = RunConfig::defaults();
  Reader r(doc, "");
  r.get("seed", c.seed);
  r.get("jobs", c.jobs);
  std::string precision = "f32";
  r.get("precision", precision);
  if (precision != "f32" && precision != "f64") config_fail("precision must be f32 or f64, got '" + precision + "'");
  c.precision = precision == "f32" ? Precision::f32 : Precision::f64;
  r.get("catalog", c.catalog_name);
  {
    Reader s = r.table("synth");
    s.get("n_cases", c.n_cases);
    s.get("width", c.synth.width);
    s.get("height", c.synth.height);
    s.get("pixel_spacing_mm", c.synth.pixel_spacing_mm);
    s.get("variation_px", c.synth.variation_px);
    s.get("noise_std", c.synth.noise_std);
    s.get("blur_sigma", c.synth.blur_sigma);
    s.get("decoy", c.synth.decoy);
    s.get("observers", c.observers);
    s.get("observer_cases", c.observer_cases);
    s.finish();
  }
  {
    Reader s = r.table("sampling");
    s.get("background_per_case", c.sampling.background_per_case);
    s.get("background_scale_min", c.sampling.background.scale_min);
    s.get("background_scale_max", c.sampling.background.scale_max);
    s.get("background_min_dist_px", c.sampling.background.min_dist_px);
    s.get("background_max_attempts", c.sampling.background.max_attempts_per_patch);
    s.finish();
  }
  read_model(r.table("pc"), c.pc_arch, c.pc_train);
  read_model(r.table("pe"), c.pe_arch, c.pe_train);
  {
    Reader s = r.table("scan");
    s.get("grid_stride_px", c.scan.grid_stride_px);
    s.get("scales", c.scan.scale_set);
    s.get("pc_confidence_threshold", c.scan.pc_confidence_threshold);
    std::string agg(pipeline::aggregation_name(c.scan.aggregation));
    s.get("aggregation", agg);
    c.scan.aggregation = pipeline::parse_aggregation(agg);
    s.get("outlier_k", c.scan.outlier_k);
    s.get("select_larger_cluster", c.scan.select_larger_cluster);
    s.get("soft_filter", c.scan.soft_filter);
    s.get("soft_filter_scales", c.scan.soft_filter_scales);
    s.get("batch_size", c.scan.batch_size);
    s.finish();
  }
  {
    Reader s = r.table("eval");
    s.get("folds", c.folds);
    s.get("alpha", c.alpha);
    s.get("format", c.report_format);
    s.finish();
  }
  {
    auto specs = base_catalog(c.catalog_name).specs();
    Reader lm = r.table("landmarks");
    for (const auto& [name, v] : lm.raw().items()) {
      Reader t = lm.table(name);
      auto it = std::find_if(specs.begin(), specs.end(), [&](const auto& s) { return s.name == name; });
      if (it == specs.end()) {
        if (!t.has("tissue")) config_fail("landmarks." + name + ": new landmarks need a tissue");
        specs.push_back({});
        it = specs.end() - 1;
        it->name = name;
      }
      std::string tissue(patchset::tissue_name(it->tissue));
      t.get("tissue", tissue);
      const auto parsed = patchset::parse_tissue(tissue);
      if (!parsed) config_fail("landmarks." + name + ".tissue must be hard or soft");
      it->tissue = *parsed;
      t.get("scale_min", it->scale_min);
      t.get("scale_max", it->scale_max);
      t.get("patches_per_image", it->patches_per_image);
      t.get("aspects", it->aspect_set);
      t.finish();
    }
    lm.finish();
    c.catalog = patchset::LandmarkCatalog(std::move(specs));
  }
  r.finish();
  c.validate();
  return c;
}

RunConfig resolve_config(const std::filesystem::path* file, const std::vector<std::string>& overrides) {
  json doc = to_json(RunConfig::defaults());
  doc.erase("landmarks");
  if (file) {
    if (!std::filesystem::exists(*file)) throw Error(Errc::config_error, "config file not found: " + file->string());
    merge_into(doc, parse_toml(read_file_text(*file)));
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) config_fail("override must look like key.path=value, got '" + o + "'");
    const std::string path = trim(o.substr(0, eq));
    const std::string text = trim(o.substr(eq + 1));
    json value;
    try {
      value = parse_toml("v = " + text)["v"];
    } catch (const Error&) {
      value = text;
    }
    json* node = &doc;
    std::stringstream parts(path);
    std::string part;
    std::vector<std::string> keys;
    while (std::getline(parts, part, '.')) keys.push_back(part);
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
      json& next = (*node)[keys[i]];
      if (next.is_null()) next = json::object();
      if (!next.is_object()) config_fail("'" + keys[i] + "' in override '" + o + "' is not a table");
      node = &next;
    }
    (*node)[keys.back()] = value;
  }
  return from_json(doc);
}

std::string config_text(const RunConfig& cfg) { return to_toml(to_json(cfg)); }

}  // namespace cephlm::cli
