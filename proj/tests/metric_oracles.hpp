/*
 * Copyright (C) 2026 The Widgetcap Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Brute-force metric oracles, written independently of the library.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "widgetcap/capmetrics.hpp"

namespace widgetcap::oracle {

using Gram = std::string;

inline std::map<Gram, int> grams(const Tokens& t, std::size_t n) {
  std::map<Gram, int> out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) {
    Gram g;
    for (std::size_t k = i; k < i + n; ++k) g += t[k] + "\x1f";
    ++out[g];
  }
  return out;
}

inline double oracle_bleu(const std::vector<EvalInstance>& xs, int n) {
  double c = 0, r = 0;
  std::vector<double> hit(n, 0), tot(n, 0);
  for (const auto& x : xs) {
    c += double(x.candidate.size());
    long best = -1;
    for (const auto& ref : x.references) {
      const long d = std::labs(long(ref.size()) - long(x.candidate.size()));
      const long bd = std::labs(best - long(x.candidate.size()));
      if (best < 0 || d < bd || (d == bd && long(ref.size()) < best)) best = long(ref.size());
    }
    r += double(best);
    for (int k = 1; k <= n; ++k) {
      for (const auto& [g, cnt] : grams(x.candidate, k)) {
        int mx = 0;
        for (const auto& ref : x.references) {
          auto m = grams(ref, k);
          if (m.count(g)) mx = std::max(mx, m[g]);
        }
        hit[k - 1] += std::min(cnt, mx);
        tot[k - 1] += cnt;
      }
    }
  }
  double p = 1.0;
  for (int k = 0; k < n; ++k) {
    if (hit[k] == 0) return 0.0;
    p *= hit[k] / tot[k];
  }
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::pow(p, 1.0 / n);
}

inline bool is_subsequence(const Tokens& sub, const Tokens& seq) {
  std::size_t j = 0;
  for (std::size_t i = 0; i < seq.size() && j < sub.size(); ++i)
    if (seq[i] == sub[j]) ++j;
  return j == sub.size();
}

// Longest common subsequence by enumerating every subsequence of a.
inline std::size_t oracle_lcs(const Tokens& a, const Tokens& b) {
  std::size_t best = 0;
  for (unsigned mask = 0; mask < (1u << a.size()); ++mask) {
    Tokens sub;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (mask & (1u << i)) sub.push_back(a[i]);
    if (sub.size() > best && is_subsequence(sub, b)) best = sub.size();
  }
  return best;
}

inline double oracle_rouge(const EvalInstance& x) {
  double best = 0;
  const double b2 = 1.2 * 1.2;
  for (const auto& r : x.references) {
    const double l = double(oracle_lcs(x.candidate, r));
    if (l == 0) continue;
    const double p = l / x.candidate.size(), rc = l / r.size();
    best = std::max(best, (1 + b2) * p * rc / (rc + b2 * p));
  }
  return best;
}

inline double oracle_cider(const std::vector<EvalInstance>& xs) {
  const double N = double(xs.size());
  std::map<Gram, double> df;
  for (const auto& x : xs) {
    std::set<Gram> seen;
    for (const auto& r : x.references)
      for (std::size_t n = 1; n <= 4; ++n)
        for (const auto& [g, _] : grams(r, n)) seen.insert(g);
    for (const auto& g : seen) df[g] += 1;
  }
  double min_df = N;
  for (const auto& [_, d] : df) min_df = std::min(min_df, d);
  auto idf = [&](const Gram& g) { return std::log(N / (df.count(g) ? df[g] : min_df)); };
  double total = 0;
  for (const auto& x : xs) {
    double score = 0;
    const double lc = x.candidate.size() < 2 ? 0 : double(x.candidate.size() - 1);
    for (const auto& r : x.references) {
      const double lr = r.size() < 2 ? 0 : double(r.size() - 1);
      const double pen = std::exp(-(lc - lr) * (lc - lr) / 72.0);
      for (std::size_t n = 1; n <= 4; ++n) {
        auto gc = grams(x.candidate, n), gr = grams(r, n);
        double dot = 0, nc = 0, nr = 0;
        for (const auto& [g, c] : gc) nc += std::pow(c * idf(g), 2);
        for (const auto& [g, c] : gr) nr += std::pow(c * idf(g), 2);
        for (const auto& [g, c] : gc)
          if (gr.count(g)) dot += std::min(c * idf(g), gr[g] * idf(g)) * gr[g] * idf(g);
        if (nc > 0 && nr > 0) dot /= std::sqrt(nc) * std::sqrt(nr);
        score += dot * pen / 4.0;
      }
    }
    total += 10.0 * score / double(x.references.size());
  }
  return total / N;
}

}  // namespace widgetcap::oracle
