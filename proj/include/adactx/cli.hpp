#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "adactx/checkpoint.hpp"
#include "adactx/corpus.hpp"
#include "adactx/model.hpp"
#include "adactx/trainer.hpp"

namespace adactx {

// Entry point of the command-line tool. Returns the process exit code:
// 0 success, 1 runtime failure, 2 usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct AblationRow {
  std::string name;
  Ablation flags;
  std::vector<double> bleu;       // per seed
  std::vector<double> ambiguous;  // per seed, ambiguous-token accuracy in [0, 1]
  std::vector<double> agreement;  // per seed
  std::string error;              // non-empty if the row failed

  double mean_bleu() const;
  double mean_ambiguous() const;
  double mean_agreement() const;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::string render() const;
  std::string render_records() const;
};

struct AblationSetup {
  Checkpoint pretrained;
  DocumentCorpus train;
  DocumentCorpus test;
  TrainConfig train_cfg;  // stage forced to fine-tuning; ablation flags per row
  std::vector<std::uint64_t> seeds{1, 2, 3};
  // Removal rows to run; all false means every row.
  bool row_no_uni = false;
  bool row_no_div = false;
  bool row_no_doc_tips = false;
  DecodeOptions decode;
};

// Rows in order: full, w/o L_uni, w/o L_uni+L_div, w/o L_uni+L_div+doc tips
// (each removal is applied on top of the previous ones). The full row is
// always present; a failing row records its error and the suite continues.
AblationTable ablation_suite(const AblationSetup& setup);

}  // namespace adactx
