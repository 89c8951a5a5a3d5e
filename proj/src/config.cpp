#include "stictaf/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace stictaf {

// ---------------------------------------------------------------------------
// TOML subset

namespace {

class TomlLine {
 public:
  TomlLine(std::string_view text, std::string where) : s_(text), where_(std::move(where)) {}

  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(where_ + ": " + msg); }

  void skip_ws() {
    while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t' || s_[i_] == '\r')) ++i_;
  }
  bool at_end() {
    skip_ws();
    return i_ >= s_.size() || s_[i_] == '#';
  }
  char peek() {
    skip_ws();
    return i_ < s_.size() ? s_[i_] : '\0';
  }
  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++i_;
  }

  std::string key() {
    const char c = peek();
    if (c == '"' || c == '\'') return string_value();
    const std::size_t start = i_;
    while (i_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_' || s_[i_] == '-')) ++i_;
    if (i_ == start) fail("expected a key");
    return std::string(s_.substr(start, i_ - start));
  }

  std::vector<std::string> dotted_key() {
    std::vector<std::string> parts{key()};
    while (peek() == '.') {
      ++i_;
      parts.push_back(key());
    }
    return parts;
  }

  json value() {
    const char c = peek();
    if (c == '"' || c == '\'') return string_value();
    if (c == '[') return array_value();
    if (c == '{') fail("inline tables are not supported; use a [table] header");
    const std::size_t start = i_;
    while (i_ < s_.size() && s_[i_] != ',' && s_[i_] != ']' && s_[i_] != '#' && s_[i_] != ' ' && s_[i_] != '\t' &&
           s_[i_] != '\r')
      ++i_;
    std::string tok(s_.substr(start, i_ - start));
    if (tok.empty()) fail("missing value");
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::string digits;
    for (char ch : tok)
      if (ch != '_') digits.push_back(ch);
    if (digits == "inf" || digits == "+inf") return std::numeric_limits<double>::infinity();
    if (digits == "-inf") return -std::numeric_limits<double>::infinity();
    if (digits == "nan" || digits == "+nan" || digits == "-nan") fail("nan is not an accepted value");
    const bool is_float = digits.find_first_of(".eE") != std::string::npos;
    const char* b = digits.data() + (digits[0] == '+' ? 1 : 0);
    const char* e = digits.data() + digits.size();
    if (!is_float) {
      long long v = 0;
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec == std::errc() && p == e) return v;
    } else {
      double v = 0.0;
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec == std::errc() && p == e) return v;
    }
    fail("cannot parse value '" + tok + "'");
  }

  std::string where() const { return where_; }

 private:
  std::string string_value() {
    const char q = s_[i_++];
    std::string out;
    while (i_ < s_.size() && s_[i_] != q) {
      char c = s_[i_++];
      if (q == '"' && c == '\\') {
        if (i_ >= s_.size()) break;
        const char esc = s_[i_++];
        switch (esc) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail(std::string("unsupported escape '\\") + esc + "'");
        }
      }
      out.push_back(c);
    }
    if (i_ >= s_.size()) fail("unterminated string");
    ++i_;
    return out;
  }

  json array_value() {
    expect('[');
    json arr = json::array();
    if (peek() == ']') {
      ++i_;
      return arr;
    }
    while (true) {
      arr.push_back(value());
      const char c = peek();
      if (c == ',') {
        ++i_;
        if (peek() == ']') {
          ++i_;
          return arr;
        }
        continue;
      }
      if (c == ']') {
        ++i_;
        return arr;
      }
      fail("expected ',' or ']' in array (arrays must fit on one line)");
    }
  }

  std::string_view s_;
  std::size_t i_ = 0;
  std::string where_;
};

json& descend(json& root, const std::vector<std::string>& path, const TomlLine& line) {
  json* node = &root;
  for (const auto& part : path) {
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    if (!node->is_object()) line.fail("'" + part + "' is already a value, not a table");
  }
  return *node;
}

}  // namespace

json parse_toml(std::string_view text, const std::string& source) {
  json root = json::object();
  json* table = &root;
  std::set<std::string> headers;
  std::size_t lineno = 0, pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    TomlLine line(raw, source + ": line " + std::to_string(lineno));
    if (line.at_end()) continue;
    if (line.peek() == '[') {
      line.expect('[');
      if (line.peek() == '[') line.fail("arrays of tables are not supported");
      const auto path = line.dotted_key();
      line.expect(']');
      if (!line.at_end()) line.fail("unexpected text after table header");
      std::string joined;
      for (const auto& p : path) joined += (joined.empty() ? "" : ".") + p;
      if (!headers.insert(joined).second) line.fail("table [" + joined + "] defined twice");
      table = &descend(root, path, line);
      continue;
    }
    const auto key = line.dotted_key();
    line.expect('=');
    json v = line.value();
    if (!line.at_end()) line.fail("unexpected text after value");
    json& parent = descend(*table, std::vector<std::string>(key.begin(), key.end() - 1), line);
    if (parent.contains(key.back())) line.fail("duplicate key '" + key.back() + "'");
    parent[key.back()] = std::move(v);
  }
  return root;
}

json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (path.extension() == ".json") {
    try {
      return json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  return parse_toml(text, path.string());
}

// ---------------------------------------------------------------------------
// Run config

namespace {

// Reads keys from one JSON table and rejects whatever is left over.
class Section {
 public:
  Section(const json& j, std::string name) : name_(std::move(name)) {
    if (!j.is_object()) throw ConfigError("config: '" + name_ + "' must be a table");
    j_ = &j;
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_->contains(key)) return;
    const json& v = (*j_)[key];
    const std::string where = "config: " + qualified(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where + " must be true or false");
      out = v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where + " must be a string");
      out = v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where + " must be a number");
      out = v.get<double>();
    } else {
      if (!v.is_number_integer()) throw ConfigError(where + " must be an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.get<long long>() < 0) throw ConfigError(where + " must be non-negative");
      }
      out = v.get<T>();
    }
  }

  const json* table(const char* key) {
    seen_.insert(key);
    if (!j_->contains(key)) return nullptr;
    return &(*j_)[key];
  }

  void finish() const {
    for (auto it = j_->begin(); it != j_->end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("config: unknown key '" + qualified(it.key()) + "'");
  }

  std::string qualified(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

 private:
  const json* j_ = nullptr;
  std::string name_;
  std::set<std::string> seen_;
};

ThresholdRule::Kind parse_kind(const std::string& s) {
  if (s == "quantile") return ThresholdRule::Kind::quantile;
  if (s == "absolute") return ThresholdRule::Kind::absolute;
  throw ConfigError("config: target.threshold.kind must be 'quantile' or 'absolute', got '" + s + "'");
}

const char* kind_name(ThresholdRule::Kind k) { return k == ThresholdRule::Kind::quantile ? "quantile" : "absolute"; }

void read_cell_rules(const json& j, const std::string& name, ThresholdRule::Kind kind, ThresholdConfig& out) {
  if (!j.is_object()) throw ConfigError("config: '" + name + "' must be a table");
  for (auto it = j.begin(); it != j.end(); ++it) {
    int station = 0, season = 0;
    char tail = 0;
    if (std::sscanf(it.key().c_str(), "station%d_season%d%c", &station, &season, &tail) != 2 || station < 1 ||
        station > kStations || season < 1 || season > kSeasons)
      throw ConfigError("config: unknown key '" + name + "." + it.key() + "' (expected stationJ_seasonS)");
    if (!it.value().is_number()) throw ConfigError("config: " + name + "." + it.key() + " must be a number");
    const auto key = std::make_pair(station - 1, season - 1);
    if (out.per_cell.count(key)) throw ConfigError("config: threshold for " + it.key() + " given twice");
    out.per_cell[key] = ThresholdRule{kind, it.value().get<double>()};
  }
}

void check_rule(const ThresholdRule& r, const std::string& where) {
  if (r.kind == ThresholdRule::Kind::quantile && !(r.value > 0.0 && r.value < 1.0))
    throw ConfigError("config: " + where + " quantile must lie in (0, 1)");
  if (!std::isfinite(r.value)) throw ConfigError("config: " + where + " must be finite");
}

}  // namespace

std::string station_season_key(int station, int season) {
  return "station" + std::to_string(station + 1) + "_season" + std::to_string(season + 1);
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  Section top(j, "");
  top.get("seed", cfg.train.seed);

  if (const json* t = top.table("target")) {
    Section s(*t, "target");
    s.get("name", cfg.target.name);
    s.get("dim", cfg.target.dim);
    s.get("continuation", cfg.target.continuation);
    s.get("csv", cfg.target.csv);
    if (const json* th = s.table("threshold")) {
      Section ts(*th, "target.threshold");
      std::string kind = kind_name(cfg.target.thresholds.fallback.kind);
      ts.get("kind", kind);
      cfg.target.thresholds.fallback.kind = parse_kind(kind);
      ts.get("value", cfg.target.thresholds.fallback.value);
      if (const json* a = ts.table("absolute"))
        read_cell_rules(*a, "target.threshold.absolute", ThresholdRule::Kind::absolute, cfg.target.thresholds);
      if (const json* q = ts.table("quantile"))
        read_cell_rules(*q, "target.threshold.quantile", ThresholdRule::Kind::quantile, cfg.target.thresholds);
      ts.finish();
    }
    s.finish();
  }

  auto& tc = cfg.train;
  if (const json* m = top.table("model")) {
    Section s(*m, "model");
    s.get("K", tc.K);
    s.get("blocks", tc.flow.blocks);
    s.get("hidden", tc.flow.hidden);
    s.get("bins", tc.flow.spline.bins);
    s.get("bound", tc.flow.spline.bound);
    s.finish();
  }
  if (const json* t = top.table("train")) {
    Section s(*t, "train");
    s.get("iters_stage1", tc.iters_stage1);
    s.get("iters_stage3", tc.iters_stage3);
    s.get("mc_samples_per_component", tc.samples_per_component);
    s.get("learning_rate", tc.learning_rate);
    s.get("beta1", tc.beta1);
    s.get("beta2", tc.beta2);
    s.get("adam_eps", tc.adam_eps);
    s.get("weight_threshold", tc.weight_threshold);
    s.get("prune_weight", tc.prune_weight);
    s.get("train_backbone_stage1", tc.train_backbone_stage1);
    s.get("init_radius", tc.init_radius);
    s.get("anchor_samples", tc.anchor_samples);
    s.get("log_interval", tc.log_interval);
    s.get("divergence_nats", tc.divergence_nats);
    s.get("parallel", tc.parallel);
    s.finish();
  }
  if (const json* t = top.table("tails")) {
    Section s(*t, "tails");
    s.get("n", tc.tails.n);
    s.get("j", tc.tails.j);
    s.get("nu", tc.tails.nu);
    s.finish();
  }
  if (const json* o = top.table("output")) {
    Section s(*o, "output");
    s.get("samples", cfg.output_samples);
    s.get("dir", cfg.output_dir);
    s.finish();
  }
  top.finish();

  static const std::set<std::string> known{"nig", "complex_mixture", "std_normal", "t2_t3", "wind"};
  if (!known.count(cfg.target.name))
    throw ConfigError("config: unknown target '" + cfg.target.name +
                      "' (expected nig, complex_mixture, std_normal, t2_t3 or wind)");
  if (cfg.target.name == "wind" && cfg.target.csv.empty()) throw ConfigError("config: target 'wind' needs target.csv");
  if (cfg.target.dim < 1) throw ConfigError("config: target.dim must be positive");
  if (!(cfg.target.continuation >= 0.0)) throw ConfigError("config: target.continuation must be non-negative");
  check_rule(cfg.target.thresholds.fallback, "target.threshold.value");
  for (const auto& [key, rule] : cfg.target.thresholds.per_cell)
    check_rule(rule, "threshold for " + station_season_key(key.first, key.second));
  if (tc.flow.blocks < 1 || tc.flow.hidden < 1 || tc.flow.spline.bins < 1 || !(tc.flow.spline.bound > 0.0))
    throw ConfigError("config: model.blocks, model.hidden and model.bins must be positive, model.bound > 0");
  if (cfg.output_samples < 1) throw ConfigError("config: output.samples must be positive");
  try {
    tc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

json to_json(const RunConfig& cfg) {
  const auto& tc = cfg.train;
  json target = {{"name", cfg.target.name}};
  if (cfg.target.name == "std_normal") target["dim"] = cfg.target.dim;
  if (cfg.target.name == "nig") target["continuation"] = cfg.target.continuation;
  if (cfg.target.name == "wind") {
    target["csv"] = cfg.target.csv;
    json th = {{"kind", kind_name(cfg.target.thresholds.fallback.kind)},
               {"value", cfg.target.thresholds.fallback.value}};
    json absolute = json::object(), quantile = json::object();
    for (const auto& [key, rule] : cfg.target.thresholds.per_cell)
      (rule.kind == ThresholdRule::Kind::absolute ? absolute : quantile)[station_season_key(key.first, key.second)] =
          rule.value;
    if (!absolute.empty()) th["absolute"] = absolute;
    if (!quantile.empty()) th["quantile"] = quantile;
    target["threshold"] = th;
  }
  json out = {
      {"seed", tc.seed},
      {"target", target},
      {"model",
       {{"K", tc.K}, {"blocks", tc.flow.blocks}, {"hidden", tc.flow.hidden}, {"bins", tc.flow.spline.bins},
        {"bound", tc.flow.spline.bound}}},
      {"train",
       {{"iters_stage1", tc.iters_stage1},
        {"iters_stage3", tc.iters_stage3},
        {"mc_samples_per_component", tc.samples_per_component},
        {"learning_rate", tc.learning_rate},
        {"beta1", tc.beta1},
        {"beta2", tc.beta2},
        {"adam_eps", tc.adam_eps},
        {"weight_threshold", tc.weight_threshold},
        {"prune_weight", tc.prune_weight},
        {"train_backbone_stage1", tc.train_backbone_stage1},
        {"init_radius", tc.init_radius},
        {"anchor_samples", tc.anchor_samples},
        {"log_interval", tc.log_interval},
        {"divergence_nats", tc.divergence_nats},
        {"parallel", tc.parallel}}},
      {"tails", {{"n", tc.tails.n}, {"j", tc.tails.j}, {"nu", tc.tails.nu}}},
      {"output", {{"samples", cfg.output_samples}}},
  };
  if (!cfg.output_dir.empty()) out["output"]["dir"] = cfg.output_dir;
  return out;
}

std::string resolved_config_text(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::string config_hash(std::string_view text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

RunTargets make_run_targets(const TargetSpec& spec, const std::filesystem::path& base_dir) {
  RunTargets t;
  if (spec.name == "nig") {
    t.train = std::make_unique<NigTarget>(spec.continuation);
    t.exact = std::make_unique<NigTarget>();
  } else if (spec.name == "wind") {
    std::filesystem::path csv(spec.csv);
    if (csv.is_relative() && !base_dir.empty()) csv = base_dir / csv;
    if (!std::filesystem::exists(csv)) throw ConfigError("wind CSV '" + csv.string() + "' does not exist");
    auto data = ingest_wind_csv(csv.string(), spec.thresholds);
    t.train = std::make_unique<WindTarget>(data);
    t.exact = std::make_unique<WindTarget>(std::move(data));
  } else {
    t.train = make_target(spec.name, spec.dim);
    t.exact = make_target(spec.name, spec.dim);
  }
  return t;
}

}  // namespace stictaf
