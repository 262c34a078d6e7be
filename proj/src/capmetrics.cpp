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

#include "widgetcap/capmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

#include "widgetcap/nn/exact.hpp"

namespace widgetcap {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(std::span<const std::string> tokens, std::size_t n) {
  NgramCounts out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++out[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  return out;
}

void check_references(const EvalInstance& instance) {
  if (instance.references.empty())
    throw std::invalid_argument("evaluation instance has no references");
}

struct BleuStats {
  std::array<std::size_t, 2> correct{};
  std::array<std::size_t, 2> guessed{};
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
};

void accumulate_bleu(const EvalInstance& instance, BleuStats& stats) {
  check_references(instance);
  const auto& c = instance.candidate;
  stats.candidate_length += c.size();
  std::size_t best = instance.references.front().size();
  for (const auto& r : instance.references) {
    const auto d = [&](std::size_t l) { return l > c.size() ? l - c.size() : c.size() - l; };
    if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
  }
  stats.reference_length += best;
  for (std::size_t n = 1; n <= 2; ++n) {
    const auto cand = ngrams(c, n);
    std::vector<NgramCounts> refs;
    for (const auto& r : instance.references) refs.push_back(ngrams(r, n));
    for (const auto& [gram, count] : cand) {
      std::size_t max_ref = 0;
      for (const auto& r : refs) {
        auto it = r.find(gram);
        if (it != r.end()) max_ref = std::max(max_ref, it->second);
      }
      stats.correct[n - 1] += std::min(count, max_ref);
      stats.guessed[n - 1] += count;
    }
  }
}

double bleu_from(const BleuStats& stats, int n) {
  double log_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    if (stats.correct[k] == 0) return 0.0;
    log_sum += std::log(double(stats.correct[k]) / double(stats.guessed[k]));
  }
  const double c = double(stats.candidate_length), r = double(stats.reference_length);
  const double penalty = c < r ? std::exp(1.0 - r / c) : 1.0;
  return penalty * std::exp(log_sum / n);
}


}  // namespace

EvalInstance make_instance(const std::string& candidate, std::span<const std::string> references) {
  EvalInstance out;
  out.candidate = tokenize(candidate);
  for (const auto& r : references) out.references.push_back(tokenize(r));
  return out;
}

double exact_sum(std::span<const double> values) {
  nn::ExactSum acc;
  for (double v : values) acc.add(v);
  return acc.total();
}

double bleu(std::span<const EvalInstance> instances, int n) {
  if (n != 1 && n != 2) throw std::invalid_argument("BLEU order must be 1 or 2");
  if (instances.empty()) throw std::invalid_argument("BLEU of an empty candidate set");
  BleuStats stats;
  for (const auto& i : instances) accumulate_bleu(i, stats);
  return bleu_from(stats, n);
}

double sentence_bleu(const EvalInstance& instance, int n) {
  return bleu(std::span(&instance, 1), n);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const EvalInstance& instance, double beta) {
  check_references(instance);
  double best = 0.0;
  for (const auto& r : instance.references) {
    const auto l = double(lcs_length(instance.candidate, r));
    if (l == 0.0) continue;
    const double p = l / double(instance.candidate.size());
    const double rec = l / double(r.size());
    const double f = (1.0 + beta * beta) * p * rec / (rec + beta * beta * p);
    best = std::max(best, f);
  }
  return best;
}

double rouge_l(std::span<const EvalInstance> instances, double beta) {
  if (instances.empty()) return 0.0;
  std::vector<double> scores;
  for (const auto& i : instances) scores.push_back(rouge_l(i, beta));
  return exact_sum(scores) / double(instances.size());
}

namespace {

constexpr std::size_t kCiderOrder = 4;

struct CiderVector {
  std::array<std::map<std::vector<std::string>, double>, kCiderOrder> weights;
  std::array<double, kCiderOrder> norms{};
  double length = 0.0;  ///< bigram count, as in the reference toolkit
};

}  // namespace

std::vector<double> cider_scores(std::span<const EvalInstance> instances) {
  if (instances.size() < 2)
    throw std::invalid_argument(
        "CIDEr needs at least two instances: document frequencies come from the corpus");
  for (const auto& i : instances) check_references(i);

  std::map<std::vector<std::string>, std::size_t> df;
  for (const auto& inst : instances) {
    std::map<std::vector<std::string>, bool> seen;
    for (const auto& r : inst.references)
      for (std::size_t n = 1; n <= kCiderOrder; ++n)
        for (const auto& [g, c] : ngrams(r, n)) seen[g] = true;
    for (const auto& [g, _] : seen) ++df[g];
  }
  const double docs = double(instances.size());
  std::size_t min_df = std::numeric_limits<std::size_t>::max();
  for (const auto& [g, d] : df) min_df = std::min(min_df, d);
  const double unseen_idf = df.empty() ? 0.0 : std::log(docs / double(min_df));

  const auto vectorize = [&](const Tokens& tokens) {
    CiderVector v;
    for (std::size_t n = 1; n <= kCiderOrder; ++n) {
      for (const auto& [g, count] : ngrams(tokens, n)) {
        auto it = df.find(g);
        const double idf = it == df.end() ? unseen_idf : std::log(docs / double(it->second));
        const double w = double(count) * idf;
        v.weights[n - 1][g] = w;
        v.norms[n - 1] += w * w;
        if (n == 2) v.length += double(count);
      }
      v.norms[n - 1] = std::sqrt(v.norms[n - 1]);
    }
    return v;
  };

  std::vector<double> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) {
    const auto cand = vectorize(inst.candidate);
    std::array<std::vector<double>, kCiderOrder> per_order;
    for (const auto& r : inst.references) {
      const auto ref = vectorize(r);
      const double delta = cand.length - ref.length;
      const double penalty = std::exp(-(delta * delta) / (2.0 * kCiderSigma * kCiderSigma));
      for (std::size_t n = 0; n < kCiderOrder; ++n) {
        double val = 0.0;
        for (const auto& [g, w] : cand.weights[n]) {
          auto it = ref.weights[n].find(g);
          if (it != ref.weights[n].end()) val += std::min(w, it->second) * it->second;
        }
        if (cand.norms[n] != 0.0 && ref.norms[n] != 0.0) val /= cand.norms[n] * ref.norms[n];
        per_order[n].push_back(val * penalty);
      }
    }
    double mean = 0.0;
    for (std::size_t n = 0; n < kCiderOrder; ++n) mean += exact_sum(per_order[n]);
    mean /= double(kCiderOrder);
    out.push_back(mean / double(inst.references.size()) * 10.0);
  }
  return out;
}

double cider(std::span<const EvalInstance> instances) {
  const auto scores = cider_scores(instances);
  return exact_sum(scores) / double(scores.size());
}

MetricsReport evaluate_instances(std::span<const EvalInstance> instances) {
  if (instances.empty()) throw std::invalid_argument("no instances to evaluate");
  MetricsReport report;
  report.instances = instances.size();
  report.bleu1 = bleu(instances, 1);
  report.bleu2 = bleu(instances, 2);
  report.rouge_l = rouge_l(instances);
  const auto ciders = cider_scores(instances);
  report.cider = exact_sum(ciders) / double(ciders.size());
  for (std::size_t i = 0; i < instances.size(); ++i)
    report.per_instance.push_back({sentence_bleu(instances[i], 1), sentence_bleu(instances[i], 2),
                                   rouge_l(instances[i]), ciders[i]});
  return report;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

void write_metrics_report(std::ostream& out, const MetricsReport& report,
                          std::span<const InstanceLabel> labels, const std::string& title) {
  if (!labels.empty() && labels.size() != report.per_instance.size())
    throw std::invalid_argument("one label per instance required");
  out << "# " << title << "\n";
  out << "# scores x100; BLEU without smoothing; ROUGE-L beta " << fixed(kRougeBeta, 1)
      << "; CIDEr-D sigma " << fixed(kCiderSigma, 0) << "\n";
  out << "key\tvalue\n";
  out << "instances\t" << report.instances << "\n";
  out << "BLEU-1\t" << fixed(report.bleu1 * 100.0, 2) << "\n";
  out << "BLEU-2\t" << fixed(report.bleu2 * 100.0, 2) << "\n";
  out << "ROUGE-L\t" << fixed(report.rouge_l * 100.0, 2) << "\n";
  out << "CIDEr\t" << fixed(report.cider * 100.0, 2) << "\n";
  out << "METEOR\tn/a\n";
  out << "SPICE\tn/a\n\n";
  out << "index\tscreen_id\tlocator\tcandidate\tbleu1\tbleu2\trouge_l\tcider\n";
  for (std::size_t i = 0; i < report.per_instance.size(); ++i) {
    const auto& s = report.per_instance[i];
    out << i << '\t';
    if (labels.empty())
      out << "\t\t";
    else
      out << labels[i].screen_id << '\t' << labels[i].locator << '\t' << labels[i].candidate;
    out << '\t' << fixed(s.bleu1, 6) << '\t' << fixed(s.bleu2, 6) << '\t' << fixed(s.rouge_l, 6)
        << '\t' << fixed(s.cider, 6) << "\n";
  }
}

AgreementReport word_agreement(std::span<const std::vector<std::string>> reference_sets,
                               std::size_t bucket_size) {
  if (bucket_size == 0) throw std::invalid_argument("bucket size must be positive");
  struct Tally {
    std::size_t occurrences = 0;
    std::size_t cand_matched = 0, cand_total = 0, pool_matched = 0, pool_total = 0;
  };
  std::map<std::string, Tally> tallies;
  for (const auto& set : reference_sets) {
    if (set.size() < 2) continue;
    std::vector<std::map<std::string, std::size_t>> counts;
    for (const auto& r : set) {
      auto& m = counts.emplace_back();
      for (auto& t : tokenize(r)) ++m[t];
    }
    for (const auto& m : counts)
      for (const auto& [w, c] : m) tallies[w].occurrences += c;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      std::map<std::string, bool> words;
      for (const auto& m : counts)
        for (const auto& [w, c] : m) words[w] = true;
      for (const auto& [w, _] : words) {
        const auto count_in = [&](std::size_t j) {
          auto it = counts[j].find(w);
          return it == counts[j].end() ? std::size_t(0) : it->second;
        };
        const std::size_t cand = count_in(k);
        std::size_t max_pool = 0;
        auto& t = tallies[w];
        for (std::size_t j = 0; j < counts.size(); ++j) {
          if (j == k) continue;
          const std::size_t c = count_in(j);
          max_pool = std::max(max_pool, c);
          t.pool_total += c;
          t.pool_matched += std::min(c, cand);
        }
        t.cand_total += cand;
        t.cand_matched += std::min(cand, max_pool);
      }
    }
  }

  AgreementReport report;
  for (const auto& [w, t] : tallies) {
    if (t.occurrences < 2) continue;
    WordAgreement a;
    a.word = w;
    a.occurrences = t.occurrences;
    a.precision = t.cand_total ? double(t.cand_matched) / double(t.cand_total) : 0.0;
    a.recall = t.pool_total ? double(t.pool_matched) / double(t.pool_total) : 0.0;
    report.words.push_back(a);
  }
  std::stable_sort(report.words.begin(), report.words.end(),
                   [](const auto& a, const auto& b) { return a.occurrences > b.occurrences; });
  for (std::size_t first = 0; first < report.words.size(); first += bucket_size) {
    AgreementBucket b;
    b.first_rank = first;
    b.words = std::min(bucket_size, report.words.size() - first);
    for (std::size_t i = first; i < first + b.words; ++i) {
      b.precision += report.words[i].precision;
      b.recall += report.words[i].recall;
    }
    b.precision /= double(b.words);
    b.recall /= double(b.words);
    report.buckets.push_back(b);
  }
  return report;
}

AgreementReport word_agreement(const DatasetSplit& split, std::size_t bucket_size) {
  std::vector<std::vector<std::string>> sets;
  for (const auto& e : split.examples) sets.push_back(e.references);
  return word_agreement(sets, bucket_size);
}

}  // namespace widgetcap
