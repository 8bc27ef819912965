#pragma once

// Verification-only reference implementations. Everything here is a direct,
// slow transcription of a definition, with none of the log-space evaluation,
// shared-term factoring or normalization staging the production path uses.
// Tests and the self-check compare the two; nothing on the adaptation path
// may include this header.

#include <cmath>
#include <cstddef>
#include <vector>

#include "comet/error.hpp"

namespace comet::ref {

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw Error(Error::Code::DegenerateInput, "[ref] zero vector in cosine");
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Supervised contrastive objective by literal triple loop. Row i is a
/// known-group row of pseudo-class labels[i] when labels[i] >= 0, and an
/// unknown-group row when labels[i] < 0. Every known row is an anchor; its
/// positives are the other known rows of the same class; its denominator sums
/// similarities to every other known row plus every (unknown, known) pair.
/// Anchors without positives contribute nothing.
inline double naive_contrastive(const std::vector<std::vector<double>>& rows,
                                const std::vector<int>& labels, double tau) {
  std::vector<std::size_t> known;
  std::vector<std::size_t> unknown;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (labels[i] >= 0) {
      known.push_back(i);
    } else {
      unknown.push_back(i);
    }
  }

  double cross = 0.0;
  for (const std::size_t u : unknown) {
    for (const std::size_t j : known) {
      cross += std::exp(cosine(rows[u], rows[j]) / tau);
    }
  }

  double total = 0.0;
  for (const std::size_t i : known) {
    std::vector<std::size_t> positives;
    for (const std::size_t p : known) {
      if (p != i && labels[p] == labels[i]) positives.push_back(p);
    }
    if (positives.empty()) continue;

    double denom = cross;
    for (const std::size_t a : known) {
      if (a != i) denom += std::exp(cosine(rows[i], rows[a]) / tau);
    }
    for (const std::size_t p : positives) {
      const double frac = std::exp(cosine(rows[i], rows[p]) / tau) / denom;
      total += -std::log(frac) / static_cast<double>(positives.size());
    }
  }
  return total;
}

}  // namespace comet::ref
