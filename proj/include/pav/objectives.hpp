#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pav::objectives {

class ObjectiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Reduction { Mean, Sum };

struct SftNllInput {
  std::vector<double> token_logprobs;  // log p of each target token, all <= 0
  Reduction reduction = Reduction::Mean;
};

/// -mean or -sum of the token log-probabilities. Throws on an empty list or a
/// positive log-probability beyond 1e-9.
double sft_nll(const SftNllInput& in);

struct DpoLossInput {
  double logp_policy_chosen;
  double logp_policy_rejected;
  double logp_ref_chosen;
  double logp_ref_rejected;
  double beta = 0.1;

  /// Throws ObjectiveError on beta <= 0 or non-finite log-probabilities.
  void validate() const;
  /// Implicit reward gap z = (pc - rc) - (pr - rr).
  [[nodiscard]] double margin() const;
};

/// log(1 + exp(x)) without overflow or cancellation.
double softplus(double x);
double sigmoid(double x);

/// -log sigmoid(beta * z), evaluated as softplus(-beta * z).
double dpo_loss(const DpoLossInput& in);

struct DpoGradient {
  double policy_chosen;
  double policy_rejected;
  double ref_chosen;
  double ref_rejected;
};

/// Partial derivatives of dpo_loss w.r.t. the four log-probabilities.
DpoGradient dpo_loss_grad(const DpoLossInput& in);

struct LogprobRow {
  std::string prompt;
  double chosen_lp;
  double rejected_lp;
  double ref_chosen_lp;
  double ref_rejected_lp;
};

/// JSONL rows of {"prompt", "chosen_lp", "rejected_lp", "ref_chosen_lp", "ref_rejected_lp"}.
std::vector<LogprobRow> read_logprob_fixture(const std::filesystem::path& path);

struct DpoReport {
  std::size_t count = 0;
  double beta = 0.0;
  double mean_loss = 0.0;
  double mean_implicit_margin = 0.0;  // mean of beta * z
};

/// Arithmetic means over the rows. Throws ObjectiveError on an empty set.
DpoReport dataset_dpo_report(std::span<const LogprobRow> rows, double beta);

}  // namespace pav::objectives
