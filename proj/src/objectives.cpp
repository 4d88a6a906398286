#include "pav/objectives.hpp"

#include <cmath>

#include <json.hpp>

#include "pav/util.hpp"

namespace pav::objectives {

double sft_nll(const SftNllInput& in) {
  if (in.token_logprobs.empty()) throw ObjectiveError("sft_nll: empty token list");
  double sum = 0.0;
  for (double lp : in.token_logprobs) {
    if (!std::isfinite(lp) || lp > 1e-9) throw ObjectiveError("sft_nll: log-probabilities must be finite and <= 0");
    sum += lp;
  }
  const double nll = in.reduction == Reduction::Sum ? -sum : -sum / static_cast<double>(in.token_logprobs.size());
  return nll <= 0.0 ? 0.0 : nll;  // tolerance band above zero, and no -0.0
}

void DpoLossInput::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ObjectiveError("dpo: beta must be positive and finite");
  for (double v : {logp_policy_chosen, logp_policy_rejected, logp_ref_chosen, logp_ref_rejected}) {
    if (!std::isfinite(v)) throw ObjectiveError("dpo: log-probabilities must be finite");
  }
}

double DpoLossInput::margin() const {
  return (logp_policy_chosen - logp_ref_chosen) - (logp_policy_rejected - logp_ref_rejected);
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double dpo_loss(const DpoLossInput& in) {
  in.validate();
  return softplus(-in.beta * in.margin());
}

DpoGradient dpo_loss_grad(const DpoLossInput& in) {
  in.validate();
  const double g = in.beta * sigmoid(-in.beta * in.margin());
  return {-g, g, g, -g};
}

std::vector<LogprobRow> read_logprob_fixture(const std::filesystem::path& path) {
  const auto content = read_file(path);
  std::vector<LogprobRow> rows;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string::npos) end = content.size();
    ++line_no;
    const auto line = trim(std::string_view(content).substr(pos, end - pos));
    pos = end + 1;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      rows.push_back({j.value("prompt", ""), j.at("chosen_lp").get<double>(), j.at("rejected_lp").get<double>(),
                      j.at("ref_chosen_lp").get<double>(), j.at("ref_rejected_lp").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw ObjectiveError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

DpoReport dataset_dpo_report(std::span<const LogprobRow> rows, double beta) {
  if (rows.empty()) throw ObjectiveError("dpo report: empty dataset");
  DpoReport r;
  r.beta = beta;
  r.count = rows.size();
  double loss = 0.0;
  double margin = 0.0;
  for (const auto& row : rows) {
    const DpoLossInput in{row.chosen_lp, row.rejected_lp, row.ref_chosen_lp, row.ref_rejected_lp, beta};
    loss += dpo_loss(in);
    margin += beta * in.margin();
  }
  r.mean_loss = loss / static_cast<double>(rows.size());
  r.mean_implicit_margin = margin / static_cast<double>(rows.size());
  return r;
}

}  // namespace pav::objectives
