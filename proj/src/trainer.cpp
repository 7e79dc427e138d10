#include "adactx/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "adactx/error.hpp"
#include "adactx/predictor.hpp"

namespace adactx {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Config, m); };
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1 must be in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2 must be in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  if (warmup_steps < 0) fail("warmup_steps must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (max_steps < 0) fail("max_steps must be >= 0");
  if (log_every < 0 || ckpt_every < 0) fail("log_every and ckpt_every must be >= 0");
  if (!(tau > 0.0) || !std::isfinite(tau)) fail("tau must be positive");
  if (!(mask_rate >= 0.0 && mask_rate < 1.0)) fail("mask_rate must be in [0, 1)");
  if (!(clip_norm > 0.0)) fail("clip_norm must be positive");
  if (lambda_mode == LambdaMode::OneHot && lambda_onehot < 0) fail("lambda_onehot must be >= 0");
  weights.validate();
}

LossWeights TrainConfig::effective_weights() const {
  LossWeights w = weights;
  if (stage == Stage::SentencePretrain) return {0.0, 0.0, 0.0};
  if (ablation.no_div) w.beta1 = 0.0;
  if (ablation.no_uni) w.beta2 = 0.0;
  if (ablation.no_doc_tips) w.beta3 = 0.0;
  return w;
}

double scheduled_lr(const TrainConfig& cfg, std::int64_t step) {
  if (cfg.warmup_steps == 0) return cfg.lr;
  const double s = static_cast<double>(std::max<std::int64_t>(step, 1));
  const double w = static_cast<double>(cfg.warmup_steps);
  return cfg.lr * std::min(s / w, std::sqrt(w / s));
}

// ---- objective ------------------------------------------------------------------

namespace {

struct Encoded {
  ag::Var hidden;
  std::vector<std::uint8_t> keep;
};

Encoded encode_for(ModelGraph& g, const ContextVariant& v, Stage stage) {
  Encoded e;
  if (stage == Stage::SentencePretrain)
    e.hidden = g.encode(v.src_ids, v.src_segments, e.keep);
  else
    e.hidden = g.encode_variant(v, e.keep);
  return e;
}

ag::Var variant_nll(ModelGraph& g, const Encoded& enc, const ContextVariant& v, int depth) {
  TokenIds ids, segs;
  const std::span<const std::int32_t> tgt(v.tgt_ids);
  decoder_inputs(tgt.first(tgt.size() - 1), v.forced_tgt_prefix.size(), ids, segs);
  ag::Var logits = g.decode(enc.hidden, enc.keep, ids, segs, depth);
  return ag::nll(g.tape(), logits, v.tgt_ids, v.tgt_loss_mask);
}

}  // namespace

ObjectiveResult evaluate_objective(const ModelParams& params, std::span<const BatchItem> batch,
                                   const ObjectiveSettings& settings, ParamGrads* grads) {
  if (batch.empty()) throw Error(ErrorKind::EmptyInput, "empty batch");
  const ModelConfig& cfg = params.config();
  const int n = cfg.n_options;
  ag::Tape t(grads != nullptr);
  ModelGraph g(t, params, grads, {settings.training, batch.front().dropout_seed});
  const bool finetune = settings.stage == Stage::DocumentFinetune;

  std::vector<ag::Var> item_mt, pis, mask_terms;
  std::vector<ag::Var> item_nll, item_lambda;
  for (const BatchItem& item : batch) {
    if (!finetune) {
      const ContextVariant& v = item.variants.at(0);
      const Encoded enc = encode_for(g, v, settings.stage);
      const int depth = cfg.variant == VariantKind::Concatenate
                            ? decoder_depth(cfg, empty_context_option(cfg.variant))
                            : cfg.dec_layers;
      item_mt.push_back(variant_nll(g, enc, v, depth));
      continue;
    }
    if (static_cast<int>(item.variants.size()) != n)
      throw Error(ErrorKind::Shape, "batch item has the wrong number of variants");

    std::vector<Encoded> encs;
    encs.reserve(item.variants.size());
    std::vector<ag::Var> nlls;
    bool any_mask = false;
    for (int o = 0; o < n; ++o) {
      const ContextVariant& v = item.variants[static_cast<std::size_t>(o)];
      encs.push_back(encode_for(g, v, settings.stage));
      nlls.push_back(variant_nll(g, encs.back(), v, decoder_depth(cfg, o)));
      if (o < static_cast<int>(item.mask_positions.size()) &&
          !item.mask_positions[static_cast<std::size_t>(o)].empty()) {
        any_mask = true;
        ag::Var logits = g.mask_head(encs.back().hidden);
        mask_terms.push_back(ag::mask_loss(t, logits, item.mask_positions[static_cast<std::size_t>(o)],
                                           item.mask_targets[static_cast<std::size_t>(o)]));
      }
    }

    const int empty = empty_context_option(cfg.variant);
    Encoded pred_enc;
    const Encoded* pe = &encs[static_cast<std::size_t>(empty)];
    if (any_mask) {
      pred_enc = encode_for(g, item.predictor_input, settings.stage);
      pe = &pred_enc;
    }
    ag::Var pooled = ag::pool(t, pe->hidden, pe->keep);
    ag::Var logits = g.predictor_logits(pooled);
    ag::Var pi = ag::softmax_rows(t, logits);
    pis.push_back(pi);

    ag::Var lambda;
    switch (settings.lambda_mode) {
      case LambdaMode::Gumbel:
        lambda = ag::gumbel_weights(t, ag::log_softmax_rows(t, logits), item.gumbel, settings.tau);
        break;
      case LambdaMode::Uniform:
        lambda = t.constant(Matrix(1, static_cast<std::size_t>(n), 1.0 / n));
        break;
      case LambdaMode::OneHot: {
        if (settings.lambda_onehot >= n) throw Error(ErrorKind::Option, "lambda_onehot out of range");
        Matrix m(1, static_cast<std::size_t>(n), 0.0);
        m(0, static_cast<std::size_t>(settings.lambda_onehot)) = 1.0;
        lambda = t.constant(std::move(m));
        break;
      }
    }
    ag::Var per_option = ag::concat_cols(t, nlls);
    item_nll.push_back(per_option);
    item_lambda.push_back(lambda);
    item_mt.push_back(ag::weighted_mt_loss(t, per_option, lambda));
  }

  ag::LossParts parts;
  parts.l_mt = ag::mean(t, ag::concat_cols(t, item_mt));
  if (finetune) {
    ag::Var all_pi = ag::concat_rows(t, pis);
    parts.l_div = ag::diversity_loss(t, all_pi);
    parts.l_uni = ag::uniformity_loss(t, all_pi);
  } else {
    parts.l_div = t.constant(Matrix(1, 1, 0.0));
    parts.l_uni = t.constant(Matrix(1, 1, 0.0));
  }
  parts.l_mask = mask_terms.empty() ? t.constant(Matrix(1, 1, 0.0))
                                    : ag::mean(t, ag::concat_cols(t, mask_terms));
  const LossWeights w = finetune ? settings.weights : LossWeights{0.0, 0.0, 0.0};
  ag::Var total = ag::total_loss(t, parts, w);
  if (grads != nullptr) t.backward(total);

  ObjectiveResult r;
  r.loss.l_mt = t.value(parts.l_mt)(0, 0);
  r.loss.l_div = t.value(parts.l_div)(0, 0);
  r.loss.l_uni = t.value(parts.l_uni)(0, 0);
  r.loss.l_mask = t.value(parts.l_mask)(0, 0);
  r.loss.total = t.value(total)(0, 0);
  if (finetune) {
    r.loss.per_option_nll.assign(static_cast<std::size_t>(n), 0.0);
    r.loss.lambda.assign(static_cast<std::size_t>(n), 0.0);
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const auto& nv = t.value(item_nll[k]);
      const auto& lv = t.value(item_lambda[k]);
      const auto& pv = t.value(pis[k]);
      for (int o = 0; o < n; ++o) {
        r.loss.per_option_nll[static_cast<std::size_t>(o)] += inv * nv(0, static_cast<std::size_t>(o));
        r.loss.lambda[static_cast<std::size_t>(o)] += inv * lv(0, static_cast<std::size_t>(o));
      }
      r.pi.emplace_back(pv.flat().begin(), pv.flat().end());
    }
  }
  return r;
}

// ---- batches --------------------------------------------------------------------

std::vector<BatchItem> make_batch(const DocumentCorpus& corpus, const ModelConfig& model,
                                  const TrainConfig& cfg, std::int64_t step) {
  std::vector<std::pair<std::size_t, std::size_t>> index;
  for (std::size_t d = 0; d < corpus.documents.size(); ++d)
    for (std::size_t s = 0; s < corpus.documents[d].size(); ++s) index.emplace_back(d, s);
  if (index.empty()) throw Error(ErrorKind::EmptyInput, "training corpus is empty");

  const auto total = static_cast<std::uint64_t>(index.size());
  const auto first = static_cast<std::uint64_t>(step - 1) * static_cast<std::uint64_t>(cfg.batch_size);
  std::uint64_t cached_epoch = UINT64_MAX;
  std::vector<std::size_t> perm(index.size());

  const LossWeights w = cfg.effective_weights();
  const bool finetune = cfg.stage == Stage::DocumentFinetune;
  const bool masking = finetune && w.beta3 > 0.0 && cfg.mask_rate > 0.0;
  const int empty = empty_context_option(model.variant);

  std::vector<BatchItem> batch(static_cast<std::size_t>(cfg.batch_size));
  for (int b = 0; b < cfg.batch_size; ++b) {
    const std::uint64_t g = first + static_cast<std::uint64_t>(b);
    const std::uint64_t epoch = g / total;
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      Rng shuffle = make_rng({cfg.seed, epoch, 0xE90C});
      for (std::size_t i = perm.size(); i > 1; --i)
        std::swap(perm[i - 1], perm[uniform_index(shuffle, i)]);
      cached_epoch = epoch;
    }
    const auto [doc, sent] = index[perm[g % total]];
    BatchItem& item = batch[static_cast<std::size_t>(b)];
    const auto ub = static_cast<std::uint64_t>(b);
    const auto us = static_cast<std::uint64_t>(step);
    item.dropout_seed = mix_seed({cfg.seed, us, ub, 3});
    auto variants = build_variants(corpus, doc, sent, model.variant);
    item.predictor_input = variants[static_cast<std::size_t>(empty)];
    if (!finetune) {
      item.variants.push_back(std::move(variants[static_cast<std::size_t>(empty)]));
      continue;
    }
    if (masking) {
      for (auto& v : variants) {
        Rng mrng = make_rng({cfg.seed, us, ub, 1});
        MaskedSource m = apply_source_mask(v, mrng, cfg.mask_rate, model.vocab_size);
        if (!m.variant.ctx_segments.empty() && m.variant.ctx_segments.front() == seg::kCurrent)
          m.variant.ctx_ids = m.variant.src_ids;
        v = std::move(m.variant);
        item.mask_positions.push_back(std::move(m.positions));
        item.mask_targets.push_back(std::move(m.original_ids));
      }
    }
    item.variants = std::move(variants);
    Rng grng = make_rng({cfg.seed, us, ub, 2});
    item.gumbel = sample_gumbel(grng, static_cast<std::size_t>(model.n_options));
  }
  return batch;
}

// ---- trainer ---------------------------------------------------------------------

std::string StepRecord::format() const {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "step=%lld lr=%.6g total=%.6f l_mt=%.6f l_div=%.6f l_uni=%.6f l_mask=%.6f "
                "grad_norm=%.4f",
                static_cast<long long>(step), lr, loss.total, loss.l_mt, loss.l_div, loss.l_uni,
                loss.l_mask, grad_norm);
  std::string s = buf;
  if (!mean_pi.empty()) {
    s += " pi=";
    for (std::size_t i = 0; i < mean_pi.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.4f", i ? "," : "", mean_pi[i]);
      s += buf;
    }
  }
  return s;
}

namespace {

constexpr const char* kStageNames[] = {"pretrain", "finetune"};

void apply_model_flags(ModelParams& p, const TrainConfig& cfg) {
  if (cfg.ablation.no_doc_tips) {
    p.mutable_config().use_segments = false;
    p.mutable_config().adaptive_depth = false;
  }
}

}  // namespace

Trainer::Trainer(ModelParams params, TrainConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  params_.config().validate();
  apply_model_flags(params_, cfg_);
  m_ = params_.zeros_like();
  v_ = params_.zeros_like();
}

Trainer Trainer::resume(const Checkpoint& ckpt, TrainConfig cfg) {
  Trainer tr(ckpt.params, cfg);
  const auto st = ckpt.meta.find("train.stage");
  const auto sp = ckpt.meta.find("train.step");
  if (st == ckpt.meta.end() || sp == ckpt.meta.end() ||
      st->second != kStageNames[static_cast<int>(cfg.stage)])
    return tr;
  std::size_t restored = 0;
  for (const auto& [name, m] : ckpt.extra) {
    const bool is_m = name.rfind("optim.m.", 0) == 0;
    const bool is_v = name.rfind("optim.v.", 0) == 0;
    if (!is_m && !is_v) continue;
    const auto idx = tr.params_.find(std::string_view(name).substr(8));
    if (!idx || !m.same_shape(tr.params_.value(*idx)))
      throw Error(ErrorKind::Parse, "optimizer tensor does not match a parameter: " + name);
    (is_m ? tr.m_ : tr.v_)[*idx] = m;
    ++restored;
  }
  if (restored != 2 * tr.params_.count())
    throw Error(ErrorKind::Parse, "checkpoint has incomplete optimizer state");
  tr.step_ = std::stoll(sp->second);
  return tr;
}

StepRecord Trainer::step(const DocumentCorpus& corpus) {
  ++step_;
  const auto batch = make_batch(corpus, params_.config(), cfg_, step_);
  ObjectiveSettings s;
  s.stage = cfg_.stage;
  s.weights = cfg_.effective_weights();
  s.tau = cfg_.tau;
  s.lambda_mode = cfg_.lambda_mode;
  s.lambda_onehot = cfg_.lambda_onehot;
  s.training = true;
  ParamGrads grads = params_.zeros_like();
  ObjectiveResult r = evaluate_objective(params_, batch, s, &grads);
  if (!std::isfinite(r.loss.total))
    throw Error(ErrorKind::Numeric, "loss diverged at step " + std::to_string(step_));

  double sq = 0.0;
  for (const auto& g : grads)
    for (double x : g.flat()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm))
    throw Error(ErrorKind::Numeric, "non-finite gradient at step " + std::to_string(step_));
  const double clip = norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;

  const double lr = scheduled_lr(cfg_, step_);
  const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.count(); ++i) {
    auto p = params_.value(i).flat();
    auto g = grads[i].flat();
    auto m = m_[i].flat();
    auto v = v_[i].flat();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j] * clip;
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      p[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.adam_eps);
    }
  }

  StepRecord rec;
  rec.step = step_;
  rec.lr = lr;
  rec.grad_norm = norm;
  rec.loss = std::move(r.loss);
  if (!r.pi.empty()) {
    rec.mean_pi.assign(r.pi.front().size(), 0.0);
    for (const auto& p : r.pi)
      for (std::size_t o = 0; o < p.size(); ++o) rec.mean_pi[o] += p[o] / static_cast<double>(r.pi.size());
  }
  return rec;
}

void Trainer::run(const DocumentCorpus& corpus, const std::function<void(const StepRecord&)>& log,
                  const std::function<void(const Trainer&)>& save) {
  while (step_ < cfg_.max_steps) {
    StepRecord rec = step(corpus);
    if (log && (cfg_.log_every > 0 && (step_ % cfg_.log_every == 0 || step_ == cfg_.max_steps)))
      log(rec);
    if (save && cfg_.ckpt_every > 0 && step_ % cfg_.ckpt_every == 0) save(*this);
  }
}

Checkpoint Trainer::checkpoint(const Vocabulary& vocab) const {
  Checkpoint c{params_, vocab, {}, {}};
  c.meta["train.stage"] = kStageNames[static_cast<int>(cfg_.stage)];
  c.meta["train.step"] = std::to_string(step_);
  c.meta["train.seed"] = std::to_string(cfg_.seed);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", cfg_.tau);
  c.meta["predictor.tau"] = buf;
  for (std::size_t i = 0; i < params_.count(); ++i) {
    c.extra.emplace_back("optim.m." + params_.name(i), m_[i]);
    c.extra.emplace_back("optim.v." + params_.name(i), v_[i]);
  }
  return c;
}

// ---- gradient check -------------------------------------------------------------------

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

GradCheckReport grad_check(const Objective& objective, const ModelParams& params,
                           std::size_t count, double eps, std::uint64_t seed) {
  ParamGrads grads = params.zeros_like();
  objective(params, &grads);
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t i = 0; i < params.count(); ++i)
    for (std::size_t j = 0; j < params.value(i).size(); ++j) all.emplace_back(i, j);
  Rng rng = make_rng({seed, 0x6C4E});
  for (std::size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[uniform_index(rng, i)]);

  ModelParams work = params;
  GradCheckReport rep;
  const std::size_t zero_budget = std::min<std::size_t>(count / 5 + 1, 20);
  for (const auto& [i, j] : all) {
    if (rep.entries.size() >= count) break;
    const double a = grads[i].flat()[j];
    if (a == 0.0 && rep.zero_entries >= zero_budget) continue;
    double& x = work.value(i).flat()[j];
    const double x0 = x;
    x = x0 + eps;
    const double fp = objective(work, nullptr);
    x = x0 - eps;
    const double fm = objective(work, nullptr);
    x = x0;
    const double num = (fp - fm) / (2.0 * eps);
    if (a == 0.0) {
      ++rep.zero_entries;
      rep.max_abs_zero = std::max(rep.max_abs_zero, std::abs(num));
      continue;
    }
    GradCheckEntry e{params.name(i), j, a, num, relative_error(a, num)};
    rep.max_rel_error = std::max(rep.max_rel_error, e.rel_error);
    rep.entries.push_back(std::move(e));
  }
  return rep;
}

}  // namespace adactx

namespace adactx {

Objective full_objective(std::vector<BatchItem> batch, ObjectiveSettings settings) {
  return [batch = std::move(batch), settings](const ModelParams& p, ParamGrads* g) {
    return evaluate_objective(p, batch, settings, g).loss.total;
  };
}

Objective linear_head_objective(const ModelParams& params, std::uint64_t seed) {
  const auto& L = params.layout();
  const std::size_t d = params.value(static_cast<std::size_t>(L.pred_w)).rows();
  const std::size_t n = params.value(static_cast<std::size_t>(L.pred_w)).cols();
  Rng rng = make_rng({seed, 0x11EA});
  Matrix x(1, d), c(1, n);
  for (double& v : x.flat()) v = normal(rng);
  for (double& v : c.flat()) v = normal(rng);
  return [x, c, wi = L.pred_w, bi = L.pred_b](const ModelParams& p, ParamGrads* g) {
    ag::Tape t(g != nullptr);
    ag::Var w = t.parameter(p.value(static_cast<std::size_t>(wi)),
                            g ? &(*g)[static_cast<std::size_t>(wi)] : nullptr);
    ag::Var b = t.parameter(p.value(static_cast<std::size_t>(bi)),
                            g ? &(*g)[static_cast<std::size_t>(bi)] : nullptr);
    ag::Var logits = ag::affine(t, t.constant(x), w, b);
    ag::Var out = ag::dot(t, logits, t.constant(c));
    if (g) t.backward(out);
    return t.value(out)(0, 0);
  };
}

void randomize_zero_init(ModelParams& params, std::uint64_t seed, double scale) {
  Rng rng = make_rng({seed, 0x2A11});
  const auto& L = params.layout();
  std::vector<int> ids{L.pred_w, L.pred_b};
  if (L.cu) ids.push_back(L.cu->alpha);
  for (int id : ids)
    for (double& v : params.value(static_cast<std::size_t>(id)).flat()) v = scale * normal(rng);
}

}  // namespace adactx
