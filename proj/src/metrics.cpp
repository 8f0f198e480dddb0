// SPDX-License-Identifier: Apache-2.0
#include "metrics.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace neurotrails {

std::string to_string(PdMode m) {
  return m == PdMode::strict ? "strict" : "pairwise";
}

PdMode parse_pd_mode(const std::string &name) {
  if (name == "pairwise")
    return PdMode::pairwise;
  if (name == "strict")
    return PdMode::strict;
  fail("unknown pd mode '" + name + "' (expected pairwise, strict)");
}

double accuracy(std::span<const std::int32_t> predictions,
                std::span<const std::int32_t> labels) {
  if (predictions.empty())
    fail("accuracy of an empty prediction set");
  if (predictions.size() != labels.size())
    fail("accuracy: " + std::to_string(predictions.size()) +
         " predictions vs " + std::to_string(labels.size()) + " labels");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    hit += predictions[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

namespace {

void check_probs(const TensorF64 &probs, std::span<const std::int32_t> labels) {
  if (probs.rank() != 2)
    fail("probabilities must be [N, classes], got " + shape_str(probs.shape()));
  if (probs.rows() != labels.size())
    fail("probabilities have " + std::to_string(probs.rows()) + " rows but " +
         std::to_string(labels.size()) + " labels");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= probs.dim(1))
      fail("label " + std::to_string(labels[i]) + " at sample " +
           std::to_string(i) + " out of range");
}

} // namespace

double nll(const TensorF64 &probs, std::span<const std::int32_t> labels) {
  check_probs(probs, labels);
  if (labels.empty())
    fail("nll of an empty set");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = probs.row(i)[labels[i]];
    total -= std::log(std::max(p, 1e-12));
  }
  return total / static_cast<double>(labels.size());
}

double ece(const TensorF64 &probs, std::span<const std::int32_t> labels,
           std::size_t bins) {
  if (bins < 1)
    fail("ece needs at least one bin");
  check_probs(probs, labels);
  if (labels.empty())
    return 0.0;
  std::vector<double> conf_sum(bins, 0.0), hits(bins, 0.0), count(bins, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = probs.row(i);
    std::size_t arg = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[arg])
        arg = c;
    const double conf = row[arg];
    auto b = static_cast<std::size_t>(std::ceil(conf * static_cast<double>(bins)));
    b = std::clamp<std::size_t>(b, 1, bins) - 1;
    conf_sum[b] += conf;
    hits[b] += static_cast<std::int32_t>(arg) == labels[i];
    count[b] += 1.0;
  }
  const double n = static_cast<double>(labels.size());
  double e = 0.0;
  for (std::size_t b = 0; b < bins; ++b)
    if (count[b] > 0.0)
      e += (count[b] / n) * std::abs(hits[b] / count[b] - conf_sum[b] / count[b]);
  return e;
}

double prediction_disagreement(const std::vector<Predictions> &per_head,
                               PdMode mode) {
  const std::size_t m = per_head.size();
  if (m < 2)
    fail("prediction disagreement needs at least 2 heads, got " +
         std::to_string(m));
  const std::size_t n = per_head[0].size();
  for (const auto &p : per_head)
    if (p.size() != n)
      fail("prediction disagreement: heads have unequal sample counts");
  if (n == 0)
    return 0.0;
  if (mode == PdMode::strict) {
    std::size_t differ = 0;
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t h = 1; h < m; ++h)
        if (per_head[h][s] != per_head[0][s]) {
          ++differ;
          break;
        }
    return static_cast<double>(differ) / static_cast<double>(n);
  }
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      std::size_t differ = 0;
      for (std::size_t s = 0; s < n; ++s)
        differ += per_head[a][s] != per_head[b][s];
      total += static_cast<double>(differ) / static_cast<double>(n);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

double perplexity(double mean_nll) { return std::exp(mean_nll); }

std::vector<DisagreementRecord>
disagreement_breakdown(const std::vector<Predictions> &per_head,
                       std::span<const std::int32_t> ensemble,
                       std::span<const std::int32_t> labels) {
  if (per_head.empty())
    return {};
  const std::size_t n = labels.size();
  if (ensemble.size() != n)
    fail("disagreement breakdown: ensemble/label length mismatch");
  for (const auto &p : per_head)
    if (p.size() != n)
      fail("disagreement breakdown: head/label length mismatch");
  std::vector<DisagreementRecord> out;
  for (std::size_t s = 0; s < n; ++s) {
    bool agree = true;
    for (std::size_t h = 1; h < per_head.size() && agree; ++h)
      agree = per_head[h][s] == per_head[0][s];
    if (agree)
      continue;
    DisagreementRecord r;
    r.sample = s;
    for (const auto &p : per_head)
      r.head_predictions.push_back(p[s]);
    r.ensemble_prediction = ensemble[s];
    r.label = labels[s];
    out.push_back(std::move(r));
  }
  return out;
}

} // namespace neurotrails
