#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "stictaf/evaluation.hpp"
#include "stictaf/vi_engine.hpp"

namespace stictaf {

// Run-directory artifacts. Every CSV starts with a "# config_hash=<hex>" line
// and every JSON document carries a "config_hash" field, tying it to the
// config.json of the same directory.

struct ArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shortest decimal form that reads back to the same double.
std::string format_double(double v);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

struct CsvTable {
  std::string config_hash;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};
CsvTable read_csv(const std::filesystem::path& path);

nlohmann::json model_to_json(const StictafModel& model, const std::string& hash);
StictafModel model_from_json(const nlohmann::json& j);

// component, coordinate (1-based), sign (+1/-1), xi ("LIGHT" for the
// light-tail sentinel), clamped_flag (0/1)
std::string tails_csv(const TailIndexTable& table, const std::string& hash);
// iter, stage, elbo, wallclock
std::string trace_csv(const std::vector<TraceRow>& trace, const std::string& hash);
// x1..xd, component
std::string samples_csv(const LabelledSamples& s, const std::string& hash);
LabelledSamples read_samples_csv(const std::filesystem::path& path);
// iter, <names...>, logp
std::string chain_csv(const McmcChain& chain, const std::vector<std::string>& names, const std::string& hash);

nlohmann::json diagnostics_to_json(const DiagnosticsReport& r, const std::string& hash);
nlohmann::json chain_summary_to_json(const McmcChain& chain, const ChainSummary& s,
                                     const std::vector<std::string>& names, const std::string& hash);

}  // namespace stictaf
