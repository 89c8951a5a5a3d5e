#include "stictaf/run_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace stictaf {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArtifactError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ArtifactError("write failed for '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json_file(const std::filesystem::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

json read_json_file(const std::filesystem::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ArtifactError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// CSV

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw ArtifactError("CSV has no column '" + name + "'");
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string hash_line(const std::string& hash) { return "# config_hash=" + hash + "\n"; }

double parse_double(const std::string& s, const std::string& where) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ArtifactError(where + ": not a number '" + s + "'");
  return v;
}

json tail_index_json(const TailIndex& xi) { return xi ? json(*xi) : json(nullptr); }

TailIndex tail_index_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  CsvTable t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string key = "# config_hash=";
      if (line.rfind(key, 0) == 0) t.config_hash = line.substr(key.size());
      continue;
    }
    auto fields = split_commas(line);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size())
      throw ArtifactError(path.string() + ": row with " + std::to_string(fields.size()) + " fields, header has " +
                          std::to_string(t.header.size()));
    t.rows.push_back(std::move(fields));
  }
  if (!have_header) throw ArtifactError(path.string() + ": missing header");
  return t;
}

// ---------------------------------------------------------------------------
// Model

json model_to_json(const StictafModel& model, const std::string& hash) {
  const auto& b = model.base;
  json base = {{"K", b.K},
               {"d", b.d},
               {"mu", b.mu},
               {"log_sigma", b.log_sigma},
               {"raw_alpha", b.raw_alpha},
               {"raw_beta", b.raw_beta},
               {"expected_weights", expected_weights(b)}};
  const auto& fc = model.backbone.config();
  json params = json::object();
  const auto& p = model.backbone.params();
  for (const auto& seg : model.backbone.segments())
    params[seg.path] = std::vector<double>(p.begin() + static_cast<std::ptrdiff_t>(seg.offset),
                                           p.begin() + static_cast<std::ptrdiff_t>(seg.offset + seg.size));
  json backbone = {{"d", fc.d},
                   {"blocks", fc.blocks},
                   {"hidden", fc.hidden},
                   {"bins", fc.spline.bins},
                   {"bound", fc.spline.bound},
                   {"min_width", fc.spline.min_width},
                   {"min_height", fc.spline.min_height},
                   {"min_derivative", fc.spline.min_derivative},
                   {"params", params}};
  json ttf = json::array();
  for (const auto& t : model.ttf) {
    json xp = json::array(), xn = json::array();
    for (const auto& v : t.xi_pos) xp.push_back(tail_index_json(v));
    for (const auto& v : t.xi_neg) xn.push_back(tail_index_json(v));
    ttf.push_back({{"mu", t.mu}, {"sigma", t.sigma}, {"xi_pos", xp}, {"xi_neg", xn}});
  }
  json anchors = json::array();
  for (const auto& a : model.anchors)
    anchors.push_back({{"component", a.component}, {"weight", a.weight}, {"mu", a.mu}, {"sigma", a.sigma}});
  json out = {{"config_hash", hash}, {"stage", stage_name(model.stage)}, {"base", base},
              {"backbone", backbone}, {"ttf", ttf},    {"anchors", anchors}};
  if (model.tails) {
    const auto& tt = *model.tails;
    json entries = json::array();
    for (const auto& e : tt.entries)
      entries.push_back({{"component", e.component},
                         {"coordinate", e.coordinate},
                         {"sign", e.sign},
                         {"xi_raw", std::isfinite(e.xi_raw) ? json(e.xi_raw) : json(nullptr)},
                         {"xi", tail_index_json(e.xi)},
                         {"clamped", e.clamped},
                         {"boundary", e.boundary},
                         {"non_monotone", e.non_monotone}});
    out["tails"] = {{"n", tt.n_used}, {"j", tt.j_used}, {"nu", tt.proposal_nu}, {"d", tt.d}, {"entries", entries}};
  }
  return out;
}

StictafModel model_from_json(const json& j) {
  try {
    StictafModel m;
    const json& base = j.at("base");
    m.base.K = base.at("K").get<int>();
    m.base.d = base.at("d").get<int>();
    m.base.mu = base.at("mu").get<std::vector<std::vector<double>>>();
    m.base.log_sigma = base.at("log_sigma").get<std::vector<std::vector<double>>>();
    m.base.raw_alpha = base.at("raw_alpha").get<std::vector<double>>();
    m.base.raw_beta = base.at("raw_beta").get<std::vector<double>>();

    const json& bb = j.at("backbone");
    FlowConfig fc;
    fc.d = bb.at("d").get<int>();
    fc.blocks = bb.at("blocks").get<int>();
    fc.hidden = bb.at("hidden").get<int>();
    fc.spline.bins = bb.at("bins").get<int>();
    fc.spline.bound = bb.at("bound").get<double>();
    fc.spline.min_width = bb.at("min_width").get<double>();
    fc.spline.min_height = bb.at("min_height").get<double>();
    fc.spline.min_derivative = bb.at("min_derivative").get<double>();
    RngStream unused(0, 0);
    m.backbone = FlowStack::identity(fc, unused);
    const json& params = bb.at("params");
    auto& p = m.backbone.params();
    for (const auto& seg : m.backbone.segments()) {
      const auto v = params.at(seg.path).get<std::vector<double>>();
      if (v.size() != seg.size) throw ArtifactError("model.json: backbone segment '" + seg.path + "' has wrong size");
      std::copy(v.begin(), v.end(), p.begin() + static_cast<std::ptrdiff_t>(seg.offset));
    }
    if (params.size() != m.backbone.segments().size()) throw ArtifactError("model.json: unexpected backbone segments");

    for (const auto& t : j.at("ttf")) {
      TtfParams tp;
      tp.mu = t.at("mu").get<std::vector<double>>();
      tp.sigma = t.at("sigma").get<std::vector<double>>();
      for (const auto& v : t.at("xi_pos")) tp.xi_pos.push_back(tail_index_from(v));
      for (const auto& v : t.at("xi_neg")) tp.xi_neg.push_back(tail_index_from(v));
      m.ttf.push_back(std::move(tp));
    }
    for (const auto& a : j.at("anchors")) {
      ComponentAnchor ca;
      ca.component = a.at("component").get<int>();
      ca.weight = a.at("weight").get<double>();
      ca.mu = a.at("mu").get<std::vector<double>>();
      ca.sigma = a.at("sigma").get<std::vector<double>>();
      m.anchors.push_back(std::move(ca));
    }
    m.stage = parse_stage(j.at("stage").get<std::string>());
    if (j.contains("tails")) {
      const json& tj = j["tails"];
      TailIndexTable tt;
      tt.n_used = tj.at("n").get<std::size_t>();
      tt.j_used = tj.at("j").get<std::size_t>();
      tt.proposal_nu = tj.at("nu").get<double>();
      tt.d = tj.at("d").get<int>();
      for (const auto& e : tj.at("entries")) {
        TailEntry te;
        te.component = e.at("component").get<int>();
        te.coordinate = e.at("coordinate").get<int>();
        te.sign = e.at("sign").get<int>();
        te.xi_raw = e.at("xi_raw").is_null() ? std::numeric_limits<double>::quiet_NaN() : e["xi_raw"].get<double>();
        te.xi = tail_index_from(e.at("xi"));
        te.clamped = e.at("clamped").get<bool>();
        te.boundary = e.at("boundary").get<bool>();
        te.non_monotone = e.at("non_monotone").get<bool>();
        tt.entries.push_back(te);
      }
      m.tails = std::move(tt);
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw ArtifactError(std::string("model.json: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ArtifactError(std::string("model.json: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// CSV writers

std::string tails_csv(const TailIndexTable& table, const std::string& hash) {
  std::string out = hash_line(hash) + "component,coordinate,sign,xi,clamped_flag\n";
  for (const auto& e : table.entries) {
    out += std::to_string(e.component) + ',' + std::to_string(e.coordinate + 1) + ',' + (e.sign > 0 ? "1" : "-1") +
           ',' + (e.xi ? format_double(*e.xi) : std::string("LIGHT")) + ',' + (e.clamped ? "1" : "0") + '\n';
  }
  return out;
}

std::string trace_csv(const std::vector<TraceRow>& trace, const std::string& hash) {
  std::string out = hash_line(hash) + "iter,stage,elbo,wallclock\n";
  for (const auto& r : trace)
    out += std::to_string(r.iter) + ',' + std::to_string(r.stage) + ',' + format_double(r.elbo) + ',' +
           format_double(r.wallclock) + '\n';
  return out;
}

std::string samples_csv(const LabelledSamples& s, const std::string& hash) {
  std::string out = hash_line(hash);
  const std::size_t d = s.x.empty() ? 0 : s.x.front().size();
  for (std::size_t l = 0; l < d; ++l) out += "x" + std::to_string(l + 1) + ',';
  out += "component\n";
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    for (double v : s.x[i]) out += format_double(v) + ',';
    out += std::to_string(s.component[i]) + '\n';
  }
  return out;
}

LabelledSamples read_samples_csv(const std::filesystem::path& path) {
  const auto t = read_csv(path);
  const std::size_t comp = t.column("component");
  if (comp != t.header.size() - 1) throw ArtifactError(path.string() + ": 'component' must be the last column");
  for (std::size_t l = 0; l < comp; ++l)
    if (t.header[l] != "x" + std::to_string(l + 1))
      throw ArtifactError(path.string() + ": expected column x" + std::to_string(l + 1));
  LabelledSamples s;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = path.string() + ": data row " + std::to_string(r + 1);
    std::vector<double> x;
    for (std::size_t l = 0; l < comp; ++l) x.push_back(parse_double(t.rows[r][l], where));
    s.x.push_back(std::move(x));
    s.component.push_back(static_cast<int>(parse_double(t.rows[r][comp], where)));
  }
  return s;
}

std::string chain_csv(const McmcChain& chain, const std::vector<std::string>& names, const std::string& hash) {
  std::string out = hash_line(hash) + "iter";
  for (const auto& n : names) out += ',' + n;
  out += ",logp\n";
  for (std::size_t t = 0; t < chain.draws.size(); ++t) {
    out += std::to_string(t + 1);
    for (double v : chain.draws[t]) out += ',' + format_double(v);
    out += ',' + format_double(chain.logp[t]) + '\n';
  }
  return out;
}

json diagnostics_to_json(const DiagnosticsReport& r, const std::string& hash) {
  json pct = json::object();
  for (std::size_t l = 0; l < r.percentiles.values.size(); ++l) {
    json row = json::object();
    for (std::size_t i = 0; i < r.percentiles.probs.size(); ++i)
      row[format_double(r.percentiles.probs[i])] = r.percentiles.values[l][i];
    pct["x" + std::to_string(l + 1)] = row;
  }
  return {{"config_hash", hash},
          {"kl_mean", r.kl_mean ? json(*r.kl_mean) : json(nullptr)},
          {"kl_sd", r.kl_sd ? json(*r.kl_sd) : json(nullptr)},
          {"ess_mean", r.ess_mean},
          {"ess_sd", r.ess_sd},
          {"kl_per_seed", r.kl_per_seed},
          {"ess_per_seed", r.ess_per_seed},
          {"percentiles", pct},
          {"n", r.n},
          {"seeds", r.seeds},
          {"seed", r.seed}};
}

json chain_summary_to_json(const McmcChain& chain, const ChainSummary& s, const std::vector<std::string>& names,
                           const std::string& hash) {
  json params = json::object();
  for (std::size_t l = 0; l < names.size(); ++l)
    params[names[l]] = {{"mode", s.mode[l]},
                        {"mean", s.mean[l]},
                        {"sd", s.sd[l]},
                        {"lower_0.5", s.lower[l]},
                        {"upper_99.5", s.upper[l]}};
  return {{"config_hash", hash},
          {"iterations", chain.draws.size()},
          {"retained", s.retained},
          {"acceptance_rate", chain.acceptance_rate},
          {"proposal_trace", chain.proposal_trace},
          {"parameters", params}};
}

}  // namespace stictaf
