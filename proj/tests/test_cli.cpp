#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "adactx/cli.hpp"
#include "test_util.hpp"

namespace adactx {
namespace {

using testing::TempDir;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Small model and budget shared by the training commands.
std::vector<std::string> tiny_train(std::vector<std::string> args) {
  for (const char* a : {"--d-model", "8", "--n-heads", "2", "--ffn-dim", "16", "--enc-layers", "1",
                        "--dec-layers", "3", "--max-positions", "48", "--batch-size", "4",
                        "--max-steps", "3", "--warmup-steps", "0", "--log-every", "1"})
    args.emplace_back(a);
  return args;
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const char* value) : name_(name) { ::setenv(name, value, 1); }
  ~ScopedEnv() { ::unsetenv(name_); }

 private:
  const char* name_;
};

TEST(Cli, NoCommandIsUsageError) {
  const CliRun r = cli({});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST(Cli, HelpExitsZero) {
  const CliRun r = cli({"gen-corpus", "--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--n-docs"), std::string::npos);
}

TEST(Cli, UnknownFlagIsUsageError) {
  TempDir dir;
  const CliRun r = cli({"gen-corpus", "--out", (dir / "c.txt").string(), "--bogus", "1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(dir / "c.txt"));
}

TEST(Cli, MissingRequiredIsUsageError) {
  const CliRun r = cli({"translate", "--corpus", "x", "--out", "y"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--checkpoint"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST(Cli, BadValueIsUsageError) {
  TempDir dir;
  EXPECT_EQ(cli({"gen-corpus", "--out", (dir / "c.txt").string(), "--n-docs", "abc"}).code, 2);
  EXPECT_EQ(cli({"gen-corpus", "--out", (dir / "c.txt").string(), "--simd", "mmx"}).code, 2);
  EXPECT_EQ(cli({"gen-corpus", "--out", (dir / "c.txt").string(), "--fractions", "1,2"}).code, 2);
}

TEST(Cli, MissingFileIsRuntimeFailure) {
  TempDir dir;
  const CliRun r = cli({"translate", "--checkpoint", (dir / "none.ckpt").string(), "--corpus",
                     (dir / "none.txt").string(), "--out", (dir / "h.txt").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST(Cli, GenCorpusIsDeterministic) {
  TempDir dir;
  const std::vector<std::string> base{"gen-corpus", "--n-docs", "5", "--doc-len", "4", "--seed", "9"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", (dir / "a.txt").string()});
  b.insert(b.end(), {"--out", (dir / "b.txt").string()});
  const CliRun ra = cli(a);
  const CliRun rb = cli(b);
  ASSERT_EQ(ra.code, 0) << ra.err;
  ASSERT_EQ(rb.code, 0) << rb.err;
  EXPECT_NE(ra.out.find("documents=5 sentences=20 vocab=41"), std::string::npos);
  for (const char* ext : {".txt", ".txt.vocab", ".txt.labels"})
    EXPECT_EQ(slurp(dir / (std::string("a") + ext)), slurp(dir / (std::string("b") + ext))) << ext;
  EXPECT_FALSE(slurp(dir / "a.txt").empty());
}

TEST(Cli, ConfigPrecedence) {
  TempDir dir;
  const auto conf = dir / "run.conf";
  std::ofstream(conf) << "# settings\nn_docs = 3\ndoc_len = 2\n";
  const std::string out = (dir / "c.txt").string();

  CliRun r = cli({"gen-corpus", "--out", out, "--config", conf.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("documents=3 sentences=6"), std::string::npos);
  EXPECT_NE(r.err.find("n_docs = 3  # file"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("vocab_size = 41  # default"), std::string::npos) << r.err;
  {
    ScopedEnv env("ADACTX_N_DOCS", "4");
    r = cli({"gen-corpus", "--out", out, "--config", conf.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("documents=4 sentences=8"), std::string::npos);
    EXPECT_NE(r.err.find("n_docs = 4  # env"), std::string::npos) << r.err;

    r = cli({"gen-corpus", "--out", out, "--config", conf.string(), "--n-docs", "5"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("documents=5 sentences=10"), std::string::npos);
    EXPECT_NE(r.err.find("n_docs = 5  # flag"), std::string::npos) << r.err;
  }
  EXPECT_NE(r.err.find("# adactx gen-corpus resolved config"), std::string::npos);
}

TEST(Cli, UnknownConfigKeyIsUsageError) {
  TempDir dir;
  const auto conf = dir / "run.conf";
  std::ofstream(conf) << "n_docs = 3\nnot_a_key = 1\n";
  const CliRun r = cli({"gen-corpus", "--out", (dir / "c.txt").string(), "--config", conf.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("not_a_key"), std::string::npos);
}

TEST(Cli, GradcheckPasses) {
  const CliRun r = cli({"gradcheck", "--samples", "20", "--d-model", "8", "--n-heads", "2",
                     "--ffn-dim", "16", "--enc-layers", "1", "--dec-layers", "3"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("gradcheck objective=full sampled=20"), std::string::npos);
  EXPECT_NE(r.out.find("gradcheck PASS"), std::string::npos);
}

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir;
    ASSERT_EQ(cli({"gen-corpus", "--out", path("train.txt"), "--n-docs", "4", "--doc-len", "4"}).code, 0);
    ASSERT_EQ(cli({"gen-corpus", "--out", path("test.txt"), "--n-docs", "2", "--doc-len", "4",
                   "--seed", "2"})
                  .code,
              0);
    const CliRun pre = cli(tiny_train({"pretrain", "--corpus", path("train.txt"), "--out", path("pre.ckpt")}));
    ASSERT_EQ(pre.code, 0) << pre.err;
    const CliRun fine = cli({"finetune", "--corpus", path("train.txt"), "--init", path("pre.ckpt"), "--out",
                          path("fine.ckpt"), "--max-steps", "2", "--batch-size", "4", "--warmup-steps",
                          "0", "--log-every", "1", "--log", path("fine.log")});
    ASSERT_EQ(fine.code, 0) << fine.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string path(const std::string& name) { return (*dir_ / name).string(); }

  static TempDir* dir_;
};

TempDir* CliPipeline::dir_ = nullptr;

TEST_F(CliPipeline, TrainingWritesCheckpointsAndLogs) {
  EXPECT_TRUE(std::filesystem::exists(path("pre.ckpt")));
  EXPECT_EQ(slurp(path("fine.ckpt")).rfind("ADACTX-CHECKPOINT", 0), 0u);
  const std::string log = slurp(path("fine.log"));
  EXPECT_NE(log.find("step=1 "), std::string::npos) << log;
  EXPECT_NE(log.find("step=2 "), std::string::npos) << log;
}

TEST_F(CliPipeline, PretrainRerunIsByteIdentical) {
  const CliRun a = cli(tiny_train({"pretrain", "--corpus", path("train.txt"), "--out", path("again.ckpt")}));
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(slurp(path("again.ckpt")), slurp(path("pre.ckpt")));
  EXPECT_NE(a.out.find("saved " + path("again.ckpt") + " step=3"), std::string::npos);
}

TEST_F(CliPipeline, TranslateIsDeterministicAndLeavesInputsAlone) {
  const std::string corpus_before = slurp(path("test.txt"));
  const std::string ckpt_before = slurp(path("fine.ckpt"));
  const std::vector<std::string> base{"translate", "--checkpoint", path("fine.ckpt"), "--corpus",
                                      path("test.txt"), "--max-len", "12"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", path("h1.txt")});
  b.insert(b.end(), {"--out", path("h2.txt")});
  const CliRun ra = cli(a);
  const CliRun rb = cli(b);
  ASSERT_EQ(ra.code, 0) << ra.err;
  ASSERT_EQ(rb.code, 0) << rb.err;
  EXPECT_EQ(ra.out, rb.out);
  EXPECT_NE(ra.out.find("translate sentences=8 "), std::string::npos) << ra.out;
  EXPECT_EQ(slurp(path("h1.txt")), slurp(path("h2.txt")));
  EXPECT_EQ(slurp(path("test.txt")), corpus_before);
  EXPECT_EQ(slurp(path("fine.ckpt")), ckpt_before);
}

TEST_F(CliPipeline, TranslateModes) {
  for (const char* mode : {"sentence", "full", "adaptive"}) {
    const CliRun r = cli({"translate", "--checkpoint", path("fine.ckpt"), "--corpus", path("test.txt"),
                       "--out", path("m.txt"), "--mode", mode, "--max-len", "8"});
    EXPECT_EQ(r.code, 0) << mode << r.err;
  }
  const CliRun fixed = cli({"translate", "--checkpoint", path("fine.ckpt"), "--corpus", path("test.txt"),
                         "--out", path("m.txt"), "--mode", "fixed", "--option", "2", "--max-len", "8"});
  EXPECT_EQ(fixed.code, 0) << fixed.err;
  EXPECT_EQ(cli({"translate", "--checkpoint", path("fine.ckpt"), "--corpus", path("test.txt"), "--out",
                 path("m.txt"), "--mode", "sideways"})
                .code,
            2);
}

TEST_F(CliPipeline, BleuOfReferencesIsHundred) {
  std::ofstream hyp(path("ref_hyp.txt"));
  std::ifstream in(path("test.txt"));
  std::string line;
  while (std::getline(in, line)) {
    const auto sep = line.find(" ||| ");
    hyp << (sep == std::string::npos ? line : line.substr(sep + 5)) << '\n';
  }
  hyp.close();
  const CliRun r = cli({"bleu", "--hyp", path("ref_hyp.txt"), "--ref", path("test.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("BLEU = 100.00 ", 0), 0u) << r.out;
}

TEST_F(CliPipeline, StatsIsDeterministic) {
  const std::vector<std::string> args{"stats", "--checkpoint", path("fine.ckpt"), "--corpus",
                                      path("test.txt")};
  const CliRun a = cli(args);
  const CliRun b = cli(args);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("selection total=8"), std::string::npos) << a.out;
  EXPECT_NE(a.out.find("selection agreement="), std::string::npos);
}

TEST_F(CliPipeline, TimingHasThreeRows) {
  const CliRun r = cli({"timing", "--checkpoint", path("fine.ckpt"), "--corpus", path("test.txt"),
                     "--max-len", "8"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* name : {"sentence-level", "concatenate", "our model"})
    EXPECT_NE(r.out.find(name), std::string::npos) << name;
}

TEST_F(CliPipeline, AblateReportsFourRows) {
  const CliRun r = cli({"ablate", "--init", path("pre.ckpt"), "--corpus", path("train.txt"),
                     "--test-corpus", path("test.txt"), "--seeds", "1", "--max-steps", "1",
                     "--batch-size", "4", "--warmup-steps", "0", "--log-every", "0", "--max-len", "8"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* row : {"\nfull ", "\nw/o L_uni ", "\nw/o L_div ", "\nw/o Doc tips "})
    EXPECT_NE(r.out.find(row), std::string::npos) << row << '\n' << r.out;
  EXPECT_EQ(r.out.find("failed"), std::string::npos) << r.out;
}

TEST_F(CliPipeline, AblateSelectsRows) {
  const CliRun r = cli({"ablate", "--init", path("pre.ckpt"), "--corpus", path("train.txt"),
                     "--test-corpus", path("test.txt"), "--seeds", "1", "--max-steps", "1",
                     "--batch-size", "4", "--warmup-steps", "0", "--log-every", "0", "--max-len", "8",
                     "--no-div"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("\nfull "), std::string::npos);
  EXPECT_NE(r.out.find("\nw/o L_div "), std::string::npos);
  EXPECT_EQ(r.out.find("w/o L_uni"), std::string::npos);
  EXPECT_EQ(r.out.find("Doc tips"), std::string::npos);
}

}  // namespace
}  // namespace adactx
