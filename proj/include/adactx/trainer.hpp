#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "adactx/checkpoint.hpp"
#include "adactx/corpus.hpp"
#include "adactx/losses.hpp"
#include "adactx/model.hpp"

namespace adactx {

enum class Stage { SentencePretrain, DocumentFinetune };

// How lambda is formed during fine-tuning. Uniform and OneHot are fixed
// weights that bypass the predictor; they exist for controlled experiments.
enum class LambdaMode { Gumbel, Uniform, OneHot };

struct Ablation {
  bool no_uni = false;
  bool no_div = false;
  // Drops segment embeddings, adaptive decoder depth and the masked-token loss.
  bool no_doc_tips = false;
};

struct TrainConfig {
  Stage stage = Stage::DocumentFinetune;
  double lr = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  int warmup_steps = 400;
  int batch_size = 16;
  int max_steps = 1000;
  int log_every = 50;
  int ckpt_every = 0;
  std::uint64_t seed = 1;
  LossWeights weights;
  double tau = 1.0;
  double mask_rate = 0.15;
  double clip_norm = 1.0;
  Ablation ablation;
  LambdaMode lambda_mode = LambdaMode::Gumbel;
  int lambda_onehot = 0;

  void validate() const;
  // Betas after ablation flags.
  LossWeights effective_weights() const;
};

// Learning rate at 1-based step s: lr * min(s / w, sqrt(w / s)); constant
// when warmup is 0.
double scheduled_lr(const TrainConfig& cfg, std::int64_t step);

// One sentence of a training batch with all randomness resolved.
struct BatchItem {
  std::vector<ContextVariant> variants;  // 1 in pretraining, N in fine-tuning
  ContextVariant predictor_input;        // unmasked empty-context variant
  std::vector<std::vector<std::size_t>> mask_positions;  // per variant
  std::vector<TokenIds> mask_targets;
  std::vector<double> gumbel;
  std::uint64_t dropout_seed = 0;
};

struct ObjectiveSettings {
  Stage stage = Stage::DocumentFinetune;
  LossWeights weights;
  double tau = 1.0;
  LambdaMode lambda_mode = LambdaMode::Gumbel;
  int lambda_onehot = 0;
  bool training = false;  // dropout
};

struct ObjectiveResult {
  LossBreakdown loss;                   // batch means; lambda/nll averaged
  std::vector<std::vector<double>> pi;  // per item
};

// Forward (and backward when grads is non-null) over a whole batch on one tape.
ObjectiveResult evaluate_objective(const ModelParams& params, std::span<const BatchItem> batch,
                                   const ObjectiveSettings& settings, ParamGrads* grads);

// Deterministic batch construction for (seed, step).
std::vector<BatchItem> make_batch(const DocumentCorpus& corpus, const ModelConfig& model,
                                  const TrainConfig& cfg, std::int64_t step);

struct StepRecord {
  std::int64_t step = 0;
  double lr = 0.0;
  double grad_norm = 0.0;
  LossBreakdown loss;
  std::vector<double> mean_pi;
  std::string format() const;
};

class Trainer {
 public:
  // Applies stage/ablation settings to the model config (segments, depth).
  Trainer(ModelParams params, TrainConfig cfg);
  // Restores parameters, Adam moments and step counter.
  static Trainer resume(const Checkpoint& ckpt, TrainConfig cfg);

  StepRecord step(const DocumentCorpus& corpus);
  // Runs until max_steps; `log` receives every log_every-th record,
  // `save` is called every ckpt_every steps.
  void run(const DocumentCorpus& corpus, const std::function<void(const StepRecord&)>& log,
           const std::function<void(const Trainer&)>& save = {});

  Checkpoint checkpoint(const Vocabulary& vocab) const;
  const ModelParams& params() const noexcept { return params_; }
  ModelParams& params() noexcept { return params_; }
  const TrainConfig& config() const noexcept { return cfg_; }
  std::int64_t steps_done() const noexcept { return step_; }

 private:
  ModelParams params_;
  TrainConfig cfg_;
  ParamGrads m_, v_;
  std::int64_t step_ = 0;
};

// Central-difference check of `objective` against its analytic gradient on a
// random subset of scalar parameters.
struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};
struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  // Largest |numeric| among entries whose analytic gradient is exactly zero.
  double max_abs_zero = 0.0;
  std::size_t zero_entries = 0;
};

// |a - b| / max(|a|, |b|, 1e-6)
double relative_error(double a, double b);

using Objective = std::function<double(const ModelParams&, ParamGrads*)>;
// Samples `count` entries with a non-zero analytic gradient (plus any
// zero-gradient entries encountered on the way, reported separately).
GradCheckReport grad_check(const Objective& objective, const ModelParams& params,
                           std::size_t count, double eps, std::uint64_t seed);

}  // namespace adactx

namespace adactx {

// Total objective over a fixed batch (noise and masks frozen in the items).
Objective full_objective(std::vector<BatchItem> batch, ObjectiveSettings settings);
// Linear function of the predictor head only: sum(c .* (x W + b)) for fixed
// pooled input x and coefficients c drawn from seed.
Objective linear_head_objective(const ModelParams& params, std::uint64_t seed);
// Gives zero-initialised gates and the predictor small random values so every
// parameter group carries gradient.
void randomize_zero_init(ModelParams& params, std::uint64_t seed, double scale = 0.1);

}  // namespace adactx
