#include "adactx/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include "adactx/config.hpp"
#include "adactx/error.hpp"
#include "adactx/eval.hpp"
#include "adactx/kernels.hpp"
#include "adactx/predictor.hpp"
#include "adactx/synthetic.hpp"

namespace adactx {

namespace {

using Keys = std::vector<ConfigKey>;

Keys operator+(Keys a, const Keys& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

const Keys& common_keys() {
  static const Keys k{
      {"config", "", "key = value settings file"},
      {"seed", "1", "seed for every random choice"},
      {"simd", "", "kernel set: scalar or avx2 (default: best available)"},
  };
  return k;
}

const Keys& model_keys() {
  static const Keys k{
      {"variant", "concatenate", "concatenate or context-unit"},
      {"d_model", "32", "model width"},
      {"n_heads", "4", "attention heads"},
      {"ffn_dim", "64", "feed-forward width"},
      {"enc_layers", "3", "encoder layers"},
      {"dec_layers", "3", "decoder layers"},
      {"max_positions", "96", "longest input or output sequence"},
      {"dropout", "0", "dropout probability during training"},
  };
  return k;
}

const Keys& train_keys() {
  static const Keys k{
      {"lr", "3e-4", "peak learning rate"},
      {"adam_beta1", "0.9", "Adam beta1"},
      {"adam_beta2", "0.98", "Adam beta2"},
      {"adam_eps", "1e-9", "Adam epsilon"},
      {"warmup_steps", "400", "inverse-sqrt warmup steps (0: constant lr)"},
      {"batch_size", "16", "sentences per step"},
      {"max_steps", "1000", "total optimizer steps"},
      {"log_every", "50", "steps between log records (0: off)"},
      {"ckpt_every", "0", "steps between checkpoint saves (0: only at the end)"},
      {"beta1", "0.5", "diversity loss weight"},
      {"beta2", "0.2", "uniformity loss weight"},
      {"beta3", "0.5", "masked-token loss weight"},
      {"tau", "1", "Gumbel-softmax temperature"},
      {"mask_rate", "0.15", "share of current-sentence source tokens masked"},
      {"clip_norm", "1", "global gradient norm limit"},
      {"no_uni", "0", "drop the uniformity loss", true},
      {"no_div", "0", "drop the diversity loss", true},
      {"no_doc_tips", "0", "drop segment embeddings, adaptive depth and token masking", true},
      {"log", "", "training log file (default: stdout)"},
  };
  return k;
}

const Keys& decode_keys() {
  static const Keys k{
      {"beam", "1", "beam size (1: greedy)"},
      {"max_len", "0", "decode length limit incl. forced prefix (0: max_positions)"},
  };
  return k;
}

struct Command {
  std::string name;
  std::string help;
  Keys keys;
  std::vector<std::string> required;
  std::function<int(const ResolvedConfig&, std::ostream&, std::ostream&)> fn;
};

// ---- shared helpers ------------------------------------------------------------

bool exists(const std::string& p) { return !p.empty() && std::filesystem::exists(p); }

DocumentCorpus load_corpus(const std::string& path, const Vocabulary* vocab) {
  DocumentCorpus c;
  if (vocab != nullptr) {
    c = read_corpus(path, vocab);
  } else if (exists(path + ".vocab")) {
    const Vocabulary v = Vocabulary::read(path + ".vocab");
    c = read_corpus(path, &v);
  } else {
    c = read_corpus(path);
  }
  if (exists(path + ".labels")) read_labels(path + ".labels", c);
  return c;
}

ModelConfig model_config(const ResolvedConfig& c, int vocab_size) {
  ModelConfig m;
  const auto v = parse_variant(c.str("variant"));
  if (!v) throw Error(ErrorKind::Config, "unknown variant '" + c.str("variant") + "'");
  m.variant = *v;
  m.n_options = ModelConfig::options_for(*v);
  m.d_model = static_cast<int>(c.integer("d_model"));
  m.n_heads = static_cast<int>(c.integer("n_heads"));
  m.ffn_dim = static_cast<int>(c.integer("ffn_dim"));
  m.enc_layers = static_cast<int>(c.integer("enc_layers"));
  m.dec_layers = static_cast<int>(c.integer("dec_layers"));
  m.max_positions = static_cast<int>(c.integer("max_positions"));
  m.dropout = c.real("dropout");
  m.vocab_size = vocab_size;
  m.validate();
  return m;
}

TrainConfig train_config(const ResolvedConfig& c, Stage stage) {
  TrainConfig t;
  t.stage = stage;
  t.lr = c.real("lr");
  t.adam_beta1 = c.real("adam_beta1");
  t.adam_beta2 = c.real("adam_beta2");
  t.adam_eps = c.real("adam_eps");
  t.warmup_steps = static_cast<int>(c.integer("warmup_steps"));
  t.batch_size = static_cast<int>(c.integer("batch_size"));
  t.max_steps = static_cast<int>(c.integer("max_steps"));
  t.log_every = static_cast<int>(c.integer("log_every"));
  t.ckpt_every = static_cast<int>(c.integer("ckpt_every"));
  t.seed = c.u64("seed");
  t.weights = {c.real("beta1"), c.real("beta2"), c.real("beta3")};
  t.tau = c.real("tau");
  t.mask_rate = c.real("mask_rate");
  t.clip_norm = c.real("clip_norm");
  t.ablation = {c.boolean("no_uni"), c.boolean("no_div"), c.boolean("no_doc_tips")};
  t.validate();
  return t;
}

DecodeOptions decode_options(const ResolvedConfig& c) {
  DecodeOptions d;
  const long long beam = c.integer("beam");
  if (beam < 1) throw Error(ErrorKind::Config, "beam must be >= 1");
  d.mode = beam == 1 ? SearchMode::Greedy : SearchMode::Beam;
  d.beam = static_cast<int>(beam);
  d.max_len = static_cast<int>(c.integer("max_len"));
  return d;
}

std::vector<TokenIds> flatten(const std::vector<std::vector<TokenIds>>& docs) {
  std::vector<TokenIds> out;
  for (const auto& d : docs) out.insert(out.end(), d.begin(), d.end());
  return out;
}

std::vector<TokenIds> references(const DocumentCorpus& c) {
  std::vector<TokenIds> out;
  for (const auto& d : c.documents)
    for (const auto& p : d) out.push_back(p.tgt);
  return out;
}

// Trains and writes checkpoints; shared by pretrain and finetune.
int train(Trainer& tr, const DocumentCorpus& corpus, const std::string& out_path,
          const std::string& log_path, std::ostream& out) {
  std::unique_ptr<std::ofstream> log_file;
  std::ostream* log = &out;
  if (!log_path.empty()) {
    log_file = std::make_unique<std::ofstream>(log_path, std::ios::trunc);
    if (!*log_file) throw Error(ErrorKind::Io, "cannot write " + log_path);
    log = log_file.get();
  }
  tr.run(
      corpus, [&](const StepRecord& r) { *log << r.format() << '\n'; },
      [&](const Trainer& t) { save_checkpoint(out_path, t.checkpoint(corpus.vocab)); });
  save_checkpoint(out_path, tr.checkpoint(corpus.vocab));
  out << "saved " << out_path << " step=" << tr.steps_done() << '\n';
  return 0;
}

// ---- commands -----------------------------------------------------------------------

int cmd_gen_corpus(const ResolvedConfig& c, std::ostream& out, std::ostream&) {
  SyntheticConfig g;
  g.seed = c.u64("seed");
  g.n_docs = static_cast<int>(c.integer("n_docs"));
  g.doc_len = static_cast<int>(c.integer("doc_len"));
  g.vocab_size = static_cast<int>(c.integer("vocab_size"));
  g.min_content = static_cast<int>(c.integer("min_content"));
  g.max_content = static_cast<int>(c.integer("max_content"));
  const auto f = c.reals("fractions");
  if (f.size() != 4) throw Error(ErrorKind::Config, "fractions needs four values");
  std::copy(f.begin(), f.end(), g.fractions.begin());
  const DocumentCorpus corpus = generate_synthetic(g);
  const std::string path = c.str("out");
  write_corpus(path, corpus);
  corpus.vocab.write(path + ".vocab");
  write_labels(path + ".labels", corpus);
  out << "corpus path=" << path << " documents=" << corpus.documents.size()
      << " sentences=" << corpus.sentence_count() << " vocab=" << corpus.vocab.size() << '\n';
  return 0;
}

int cmd_pretrain(const ResolvedConfig& c, std::ostream& out, std::ostream&) {
  const TrainConfig tc = train_config(c, Stage::SentencePretrain);
  if (!c.empty("init")) {
    const Checkpoint ck = load_checkpoint(c.str("init"));
    const DocumentCorpus corpus = load_corpus(c.str("corpus"), &ck.vocab);
    Trainer tr = Trainer::resume(ck, tc);
    return train(tr, corpus, c.str("out"), c.str("log"), out);
  }
  const DocumentCorpus corpus = load_corpus(c.str("corpus"), nullptr);
  const ModelConfig mc = model_config(c, static_cast<int>(corpus.vocab.size()));
  Trainer tr(ModelParams::initialize(mc, tc.seed), tc);
  return train(tr, corpus, c.str("out"), c.str("log"), out);
}

int cmd_finetune(const ResolvedConfig& c, std::ostream& out, std::ostream&) {
  const TrainConfig tc = train_config(c, Stage::DocumentFinetune);
  const Checkpoint ck = load_checkpoint(c.str("init"));
  const DocumentCorpus corpus = load_corpus(c.str("corpus"), &ck.vocab);
  Trainer tr = Trainer::resume(ck, tc);
  return train(tr, corpus, c.str("out"), c.str("log"), out);
}

void report_translation(const Translation& tr, const DocumentCorpus& corpus,
                        const ModelParams& params, std::ostream& out, std::ostream& err) {
  for (const auto& f : tr.failures) err << "decode failure " << f << '\n';
  char buf[128];
  std::snprintf(buf, sizeof buf, "bleu=%.2f",
                corpus_bleu(flatten(tr.hypotheses), references(corpus)));
  out << "translate sentences=" << tr.timing.sentences << " failures=" << tr.failures.size()
      << ' ' << buf << '\n';
  if (corpus.has_labels())
    out << synthetic_accuracy(corpus, tr.hypotheses, &tr.options, params.config().variant)
               .render_records();
}

int cmd_translate(const ResolvedConfig& c, std::ostream& out, std::ostream& err) {
  const Checkpoint ck = load_checkpoint(c.str("checkpoint"));
  const DocumentCorpus corpus = load_corpus(c.str("corpus"), &ck.vocab);
  const auto mode = parse_translate_mode(c.str("mode"));
  if (!mode) throw Error(ErrorKind::Config, "unknown mode '" + c.str("mode") + "'");
  const Translation tr = translate_corpus(corpus, ck.params, *mode, decode_options(c),
                                          static_cast<int>(c.integer("option")));
  write_hypotheses(c.str("out"), ck.vocab, tr.hypotheses);
  report_translation(tr, corpus, ck.params, out, err);
  return 0;
}

int cmd_bleu(const ResolvedConfig& c, std::ostream& out, std::ostream&) {
  const DocumentCorpus ref = read_corpus(c.str("ref"));
  std::vector<std::size_t> sizes;
  std::vector<std::vector<std::string>> refs, hyps;
  for (const auto& d : ref.documents) {
    sizes.push_back(d.size());
    for (const auto& p : d) refs.push_back(split_whitespace(ref.vocab.decode(p.tgt)));
  }
  for (auto& d : read_hypotheses(c.str("hyp"), sizes))
    for (auto& s : d) hyps.push_back(std::move(s));
  const BleuStats s = bleu_stats(hyps, refs);
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "BLEU = %.2f %zu/%zu/%zu/%zu %zu/%zu/%zu/%zu hyp_len=%zu ref_len=%zu\n",
                bleu_score(s, c.boolean("smooth")), s.matches[0], s.matches[1], s.matches[2],
                s.matches[3], s.totals[0], s.totals[1], s.totals[2], s.totals[3], s.hyp_len,
                s.ref_len);
  out << buf;
  return 0;
}

int cmd_stats(const ResolvedConfig& c, std::ostream& out, std::ostream&) {
  const Checkpoint ck = load_checkpoint(c.str("checkpoint"));
  const DocumentCorpus corpus = load_corpus(c.str("corpus"), &ck.vocab);
  const SelectionStats s = selection_stats(corpus, ck.params);
  out << s.render_table() << s.render_records();
  if (corpus.has_labels()) {
    const auto opts = predict_options(corpus, ck.params);
    std::vector<std::vector<TokenIds>> refs;
    for (const auto& d : corpus.documents) {
      refs.emplace_back();
      for (const auto& p : d) refs.back().push_back(p.tgt);
    }
    const auto acc = synthetic_accuracy(corpus, refs, &opts, ck.params.config().variant);
    char buf[128];
    std::snprintf(buf, sizeof buf, "selection agreement=%.4f agreement_total=%zu\n",
                  acc.selection_agreement(), acc.agreement_total);
    out << buf;
  }
  return 0;
}

int cmd_timing(const ResolvedConfig& c, std::ostream& out, std::ostream& err) {
  const Checkpoint ck = load_checkpoint(c.str("checkpoint"));
  const DocumentCorpus corpus = load_corpus(c.str("corpus"), &ck.vocab);
  const DecodeOptions d = decode_options(c);
  const bool concat = ck.params.config().variant == VariantKind::Concatenate;
  TimingReport rep;
  const std::pair<TranslateMode, const char*> rows[] = {
      {TranslateMode::Sentence, "sentence-level"},
      {TranslateMode::Full, concat ? "concatenate" : "context-unit"},
      {TranslateMode::Adaptive, "our model"}};
  for (const auto& [mode, name] : rows) {
    Translation tr = translate_corpus(corpus, ck.params, mode, d);
    for (const auto& f : tr.failures) err << "decode failure " << f << '\n';
    tr.timing.model = name;
    rep.rows.push_back(tr.timing);
  }
  out << rep.render_table() << rep.render_records();
  return 0;
}

int cmd_gradcheck(const ResolvedConfig& c, std::ostream& out, std::ostream&) {
  const std::uint64_t seed = c.u64("seed");
  SyntheticConfig g;
  g.seed = seed;
  g.n_docs = 2;
  g.doc_len = 4;
  const DocumentCorpus corpus = generate_synthetic(g);
  ModelConfig mc = model_config(c, static_cast<int>(corpus.vocab.size()));
  mc.dropout = 0.0;
  ModelParams params = ModelParams::initialize(mc, seed);
  randomize_zero_init(params, seed);

  TrainConfig tc;
  tc.stage = Stage::DocumentFinetune;
  tc.seed = seed;
  tc.batch_size = static_cast<int>(c.integer("batch_size"));
  tc.weights = {c.real("beta1"), c.real("beta2"), c.real("beta3")};
  tc.tau = c.real("tau");
  tc.mask_rate = c.real("mask_rate");
  tc.validate();
  ObjectiveSettings s;
  s.weights = tc.weights;
  s.tau = tc.tau;
  const auto samples = static_cast<std::size_t>(c.integer("samples"));
  const double eps = c.real("eps");

  const GradCheckReport full =
      grad_check(full_objective(make_batch(corpus, mc, tc, 1), s), params, samples, eps, seed);
  const GradCheckReport lin =
      grad_check(linear_head_objective(params, seed), params, samples, eps, seed);
  char buf[256];
  for (const auto* r : {&full, &lin}) {
    std::snprintf(buf, sizeof buf,
                  "gradcheck objective=%s sampled=%zu max_rel_error=%.3e zero_grad_entries=%zu "
                  "max_abs_numeric_at_zero=%.3e\n",
                  r == &full ? "full" : "linear_head", r->entries.size(), r->max_rel_error,
                  r->zero_entries, r->max_abs_zero);
    out << buf;
  }
  const bool ok = full.max_rel_error < 1e-4 && lin.max_rel_error < 1e-8;
  out << "gradcheck " << (ok ? "PASS" : "FAIL") << '\n';
  return ok ? 0 : 1;
}

int cmd_ablate(const ResolvedConfig& c, std::ostream& out, std::ostream&) {
  AblationSetup a;
  a.pretrained = load_checkpoint(c.str("init"));
  a.train = load_corpus(c.str("corpus"), &a.pretrained.vocab);
  a.test = load_corpus(c.str("test_corpus"), &a.pretrained.vocab);
  a.train_cfg = train_config(c, Stage::DocumentFinetune);
  a.train_cfg.ablation = {};
  a.seeds = c.u64s("seeds");
  a.row_no_uni = c.boolean("no_uni");
  a.row_no_div = c.boolean("no_div");
  a.row_no_doc_tips = c.boolean("no_doc_tips");
  a.decode = decode_options(c);
  const AblationTable t = ablation_suite(a);
  out << t.render() << t.render_records();
  return 0;
}

std::vector<Command> commands() {
  const Keys& cm = common_keys();
  std::vector<Command> v;
  v.push_back({"gen-corpus", "generate a synthetic document corpus",
               cm + Keys{{"out", "", "corpus path (also writes .vocab and .labels)"},
                         {"n_docs", "250", "documents"},
                         {"doc_len", "8", "sentences per document"},
                         {"vocab_size", "41", "vocabulary size (21 + 2k)"},
                         {"fractions", "0.15,0.25,0.15,0.45", "needed-context mix none,prev,next,both"},
                         {"min_content", "3", "fewest content words per sentence"},
                         {"max_content", "5", "most content words per sentence"}},
               {"out"}, cmd_gen_corpus});
  v.push_back({"pretrain", "train the sentence-level model",
               cm + model_keys() + train_keys() +
                   Keys{{"corpus", "", "training corpus"},
                        {"out", "", "checkpoint to write"},
                        {"init", "", "checkpoint to resume from"}},
               {"corpus", "out"}, cmd_pretrain});
  v.push_back({"finetune", "jointly train the document model and the context predictor",
               cm + train_keys() +
                   Keys{{"corpus", "", "training corpus"},
                        {"init", "", "pretrained or partially finetuned checkpoint"},
                        {"out", "", "checkpoint to write"}},
               {"corpus", "init", "out"}, cmd_finetune});
  v.push_back({"translate", "translate a corpus",
               cm + decode_keys() +
                   Keys{{"checkpoint", "", "model checkpoint"},
                        {"corpus", "", "corpus to translate (targets used as references)"},
                        {"out", "", "hypothesis file"},
                        {"mode", "adaptive", "sentence, full, adaptive or fixed"},
                        {"option", "0", "context option for mode=fixed"}},
               {"checkpoint", "corpus", "out"}, cmd_translate});
  v.push_back({"bleu", "corpus BLEU of a hypothesis file",
               cm + Keys{{"hyp", "", "hypothesis file"},
                         {"ref", "", "reference corpus"},
                         {"smooth", "0", "add-one smoothing for n >= 2", true}},
               {"hyp", "ref"}, cmd_bleu});
  v.push_back({"stats", "predictor option-selection statistics",
               cm + Keys{{"checkpoint", "", "model checkpoint"}, {"corpus", "", "corpus"}},
               {"checkpoint", "corpus"}, cmd_stats});
  v.push_back({"timing", "decode time and token counts per mode",
               cm + decode_keys() +
                   Keys{{"checkpoint", "", "model checkpoint"}, {"corpus", "", "corpus"}},
               {"checkpoint", "corpus"}, cmd_timing});
  v.push_back({"gradcheck", "finite-difference check of the training objective",
               cm + model_keys() +
                   Keys{{"samples", "100", "parameters to check"},
                        {"eps", "1e-5", "finite-difference step"},
                        {"batch_size", "2", "sentences in the checked batch"},
                        {"beta1", "0.5", "diversity loss weight"},
                        {"beta2", "0.2", "uniformity loss weight"},
                        {"beta3", "0.5", "masked-token loss weight"},
                        {"tau", "1", "Gumbel-softmax temperature"},
                        {"mask_rate", "0.15", "masking rate"}},
               {}, cmd_gradcheck});
  v.push_back({"ablate", "finetune and score with predictor components removed",
               cm + train_keys() + decode_keys() +
                   Keys{{"init", "", "pretrained checkpoint"},
                        {"corpus", "", "training corpus"},
                        {"test_corpus", "", "evaluation corpus with labels"},
                        {"seeds", "1,2,3", "finetuning seeds"}},
               {"init", "corpus", "test_corpus"}, cmd_ablate});
  return v;
}

}  // namespace

// ---- ablation -------------------------------------------------------------------------

namespace {
double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}
}  // namespace

double AblationRow::mean_bleu() const { return mean_of(bleu); }
double AblationRow::mean_ambiguous() const { return mean_of(ambiguous); }
double AblationRow::mean_agreement() const { return mean_of(agreement); }

std::string AblationTable::render() const {
  std::string out;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-16s %8s %10s %10s\n", "model", "BLEU", "amb-acc", "agree");
  out += buf;
  for (const auto& r : rows) {
    if (!r.error.empty())
      std::snprintf(buf, sizeof buf, "%-16s %8s %10s %10s\n", r.name.c_str(), "failed", "-", "-");
    else
      std::snprintf(buf, sizeof buf, "%-16s %8.2f %10.4f %10.4f\n", r.name.c_str(), r.mean_bleu(),
                    r.mean_ambiguous(), r.mean_agreement());
    out += buf;
  }
  return out;
}

std::string AblationTable::render_records() const {
  std::string out;
  char buf[256];
  for (const auto& r : rows) {
    if (!r.error.empty()) {
      out += "ablation row=\"" + r.name + "\" error=\"" + r.error + "\"\n";
      continue;
    }
    for (std::size_t i = 0; i < r.bleu.size(); ++i) {
      std::snprintf(buf, sizeof buf,
                    "ablation row=\"%s\" run=%zu bleu=%.4f ambiguous=%.4f agreement=%.4f\n",
                    r.name.c_str(), i, r.bleu[i], r.ambiguous[i], r.agreement[i]);
      out += buf;
    }
  }
  return out;
}

AblationTable ablation_suite(const AblationSetup& setup) {
  const bool all = !setup.row_no_uni && !setup.row_no_div && !setup.row_no_doc_tips;
  std::vector<AblationRow> plan;
  plan.push_back({"full", {}, {}, {}, {}, {}});
  if (all || setup.row_no_uni) plan.push_back({"w/o L_uni", {true, false, false}, {}, {}, {}, {}});
  if (all || setup.row_no_div) plan.push_back({"w/o L_div", {true, true, false}, {}, {}, {}, {}});
  if (all || setup.row_no_doc_tips)
    plan.push_back({"w/o Doc tips", {true, true, true}, {}, {}, {}, {}});

  const auto refs = references(setup.test);
  AblationTable table;
  for (AblationRow row : plan) {
    try {
      for (std::uint64_t seed : setup.seeds) {
        TrainConfig tc = setup.train_cfg;
        tc.stage = Stage::DocumentFinetune;
        tc.seed = seed;
        tc.ablation = row.flags;
        Trainer tr = Trainer::resume(setup.pretrained, tc);
        tr.run(setup.train, {});
        const Translation t =
            translate_corpus(setup.test, tr.params(), TranslateMode::Adaptive, setup.decode);
        row.bleu.push_back(corpus_bleu(flatten(t.hypotheses), refs));
        if (setup.test.has_labels()) {
          const auto acc =
              synthetic_accuracy(setup.test, t.hypotheses, &t.options, tr.params().config().variant);
          row.ambiguous.push_back(acc.ambiguous_accuracy());
          row.agreement.push_back(acc.selection_agreement());
        } else {
          row.ambiguous.push_back(0.0);
          row.agreement.push_back(0.0);
        }
      }
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

// ---- entry point --------------------------------------------------------------------------

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const auto cmds = commands();
  CLI::App app{"Context-adaptive document translation toolkit", "adactx"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "help for every command");

  struct Bound {
    CLI::App* sub;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> opts;
  };
  std::vector<std::unique_ptr<Bound>> bound;
  for (const auto& cmd : cmds) {
    auto b = std::make_unique<Bound>();
    b->sub = app.add_subcommand(cmd.name, cmd.help);
    for (const auto& k : cmd.keys) {
      std::string desc = k.help;
      if (!k.default_value.empty() && !k.is_switch) desc += " [" + k.default_value + "]";
      if (k.is_switch)
        b->opts[k.name] = b->sub->add_flag(flag_name(k.name))->description(desc);
      else
        b->opts[k.name] = b->sub->add_option(flag_name(k.name), b->values[k.name], desc);
    }
    bound.push_back(std::move(b));
  }

  std::vector<const char*> argv{"adactx"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  std::size_t which = 0;
  while (!bound[which]->sub->parsed()) ++which;
  const Command& cmd = cmds[which];
  Bound& b = *bound[which];

  ResolvedConfig cfg(cmd.keys);
  try {
    std::string config_path;
    if (const char* env = std::getenv("ADACTX_CONFIG")) config_path = env;
    if (b.opts["config"]->count() > 0) config_path = b.values["config"];
    if (!config_path.empty()) cfg.apply_file(config_path);
    cfg.apply_env();
    for (const auto& k : cmd.keys) {
      CLI::Option* o = b.opts[k.name];
      if (o->count() == 0) continue;
      cfg.set(k.name, k.is_switch ? "1" : b.values[k.name], "flag");
    }
    for (const auto& r : cmd.required)
      if (cfg.empty(r)) throw Error(ErrorKind::Config, "missing required " + flag_name(r));
    if (!cfg.empty("simd")) {
      const auto isa = kernels::parse_isa(cfg.str("simd"));
      if (!isa) throw Error(ErrorKind::Config, "unknown simd '" + cfg.str("simd") + "'");
      kernels::select(*isa);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n\n" << b.sub->help();
    return 2;
  }

  err << "# adactx " << cmd.name << " resolved config\n" << cfg.echo();
  try {
    return cmd.fn(cfg, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::Config ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace adactx
