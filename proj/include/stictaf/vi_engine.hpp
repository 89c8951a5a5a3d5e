#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stictaf/base_mixture.hpp"
#include "stictaf/flow_backbone.hpp"
#include "stictaf/tail_estimator.hpp"
#include "stictaf/tail_transform.hpp"
#include "stictaf/targets.hpp"

namespace stictaf {

enum class Stage { base_learning, tail_frozen, refinement };
const char* stage_name(Stage s);
Stage parse_stage(const std::string& name);

// Component k draws z = mu_k + sigma_k * TTF_k(e), e ~ N(0, I), and maps it
// through the shared backbone. TTF_k works in standardized units, so its
// anchor moves with the component's own location and scale.
struct StictafModel {
  StickBreakingBase base;
  FlowStack backbone;
  std::vector<TtfParams> ttf;  // one per component
  Stage stage = Stage::base_learning;
  std::optional<TailIndexTable> tails;
  std::vector<ComponentAnchor> anchors;

  static StictafModel initialize(int K, const FlowConfig& flow, RngStream& rng);

  int K() const { return base.K; }
  int dim() const { return base.d; }

  // Trainable vector: mu (K x d), log_sigma (K x d), raw_alpha (K-1),
  // raw_beta (K-1), backbone parameters.
  std::size_t num_params() const;
  std::size_t backbone_offset() const;
  std::vector<double> pack() const;
  void unpack(std::span<const double> theta);

  void validate() const;
};

// log q(x): one backbone inverse z = T^-1(x), then log-sum-exp over
// components of log pi_k + log q_k(z), plus the inverse log-Jacobian.
double model_log_density(const StictafModel& model, std::span<const double> x);

struct LabelledSamples {
  Samples x;
  std::vector<int> component;
};
LabelledSamples sample(const StictafModel& model, std::size_t n, const RngStream& rng, bool parallel = true);

struct ElboOptions {
  std::size_t samples_per_component = 64;
  double prune_weight = 1e-4;
  bool parallel = true;
  bool with_gradient = true;
};

struct ElboError : std::runtime_error {
  ElboError(const std::string& what, int component, int sample)
      : std::runtime_error(what), component(component), sample(sample) {}
  int component, sample;
};

struct ElboResult {
  double value = 0.0;
  std::vector<double> gradient;  // matches StictafModel::pack()
  std::vector<double> per_component;
};

// Stratified weighted ELBO: sum_k pi_k (1/S) sum_s [log p(x_ks) - log q(x_ks)]
// with exactly S draws from each component. Draws for component k come from
// rng.split("elbo", k), so repeated calls with the same stream reuse them.
ElboResult weighted_elbo(const StictafModel& model, const TargetDensity& target, const ElboOptions& opt,
                         const RngStream& rng);

struct TrainConfig {
  int K = 20;
  FlowConfig flow;
  std::size_t iters_stage1 = 450;
  std::size_t iters_stage3 = 50;
  std::size_t samples_per_component = 64;
  double learning_rate = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  TailSettings tails;
  double weight_threshold = 1e-2;
  double prune_weight = 1e-4;
  bool train_backbone_stage1 = true;
  double init_radius = 5.0;
  std::size_t anchor_samples = 4096;
  std::size_t log_interval = 10;
  double divergence_nats = 1e3;
  bool parallel = true;

  void validate() const;
};

struct TraceRow {
  std::size_t iter = 0;
  int stage = 1;
  double elbo = 0.0;
  double wallclock = 0.0;  // seconds since training started
};

struct TrainResult {
  StictafModel model;
  std::vector<TraceRow> trace;
};

struct TrainAborted : std::runtime_error {
  TrainAborted(const std::string& what, StictafModel checkpoint, std::vector<TraceRow> trace)
      : std::runtime_error(what), checkpoint(std::move(checkpoint)), trace(std::move(trace)) {}
  StictafModel checkpoint;
  std::vector<TraceRow> trace;
};

using TrainObserver = std::function<void(const StictafModel&, const std::vector<TraceRow>&)>;

// Component anchors (pushforward mean and standard deviation per coordinate)
// for components whose expected weight exceeds `threshold`. These locate the
// tail-index probes in target space.
std::vector<ComponentAnchor> component_anchors(const StictafModel& model, std::size_t n, double threshold,
                                               const RngStream& rng);

// Stage 2: estimate the tail table around each anchor and attach the
// clamped indices as frozen TTF parameters.
void attach_tails(StictafModel& model, const LogDensity& logp, const TrainConfig& cfg, const RngStream& rng);

// Runs all three stages. `probe` (default: `target`) is the density used for
// tail estimation; `observer` is called every log_interval iterations and at
// the end of each stage.
TrainResult train(const TargetDensity& target, const TrainConfig& cfg, const TargetDensity* probe = nullptr,
                  const TrainObserver& observer = {});

class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1, double beta2, double eps);
  // Ascent step on `theta` along `grad`; entries with mask false are frozen.
  void step(std::vector<double>& theta, std::span<const double> grad, std::span<const bool> mask = {});
  void reset();
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace stictaf
