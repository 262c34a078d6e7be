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

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "widgetcap/capdata.hpp"

namespace widgetcap {

using Tokens = std::vector<std::string>;

struct EvalInstance {
  Tokens candidate;
  std::vector<Tokens> references;  ///< nonempty
};

/// Tokenizes a candidate string and every reference of an example.
EvalInstance make_instance(const std::string& candidate, std::span<const std::string> references);

/// Correctly rounded sum; the result does not depend on the order of values.
double exact_sum(std::span<const double> values);

/// Corpus BLEU with clipped counts, closest reference length (shorter on
/// ties), geometric mean over orders 1..n, and no smoothing. n is 1 or 2.
double bleu(std::span<const EvalInstance> instances, int n);
/// BLEU of a single instance as its own corpus.
double sentence_bleu(const EvalInstance& instance, int n);

inline constexpr double kRougeBeta = 1.2;

/// Longest common subsequence length.
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);
/// Max over references of the LCS F-measure.
double rouge_l(const EvalInstance& instance, double beta = kRougeBeta);
/// Mean of rouge_l over instances (0 for an empty corpus).
double rouge_l(std::span<const EvalInstance> instances, double beta = kRougeBeta);

inline constexpr double kCiderSigma = 6.0;

/// CIDEr-D: tf-idf over n-grams 1..4 with document frequencies from the
/// reference sets, clipped cosine against each reference with the Gaussian
/// length penalty, averaged over references and n, times 10. N-grams absent
/// from every reference set weigh as much as the rarest observed one.
/// Returns the per-instance scores. Throws std::invalid_argument for fewer
/// than two instances.
std::vector<double> cider_scores(std::span<const EvalInstance> instances);
double cider(std::span<const EvalInstance> instances);

struct InstanceScores {
  double bleu1 = 0.0;
  double bleu2 = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;
};

struct MetricsReport {
  std::size_t instances = 0;
  double bleu1 = 0.0;
  double bleu2 = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;
  std::vector<InstanceScores> per_instance;
};

/// All metrics; throws std::invalid_argument for fewer than two instances.
MetricsReport evaluate_instances(std::span<const EvalInstance> instances);

/// Per-instance labels for the report file.
struct InstanceLabel {
  std::string screen_id;
  std::size_t locator = 0;
  std::string candidate;
};

/// "key<TAB>value" corpus lines (scores x100, two decimals; METEOR and SPICE
/// n/a), a blank line, then a tab-separated per-instance table with header.
void write_metrics_report(std::ostream& out, const MetricsReport& report,
                          std::span<const InstanceLabel> labels, const std::string& title);

struct WordAgreement {
  std::string word;
  std::size_t occurrences = 0;
  double precision = 0.0;
  double recall = 0.0;
};

struct AgreementBucket {
  std::size_t first_rank = 0;  ///< 0-based frequency rank of the first word
  std::size_t words = 0;
  double precision = 0.0;
  double recall = 0.0;
};

struct AgreementReport {
  std::vector<WordAgreement> words;  ///< descending frequency, ties lexicographic
  std::vector<AgreementBucket> buckets;
};

/// Leave-one-out agreement between annotators. Each reference of an element
/// with two or more references is a candidate against the others: a
/// candidate occurrence of w matches up to the largest count of w in any
/// other reference, and each other reference's occurrences match up to the
/// candidate's count. Words with fewer than two occurrences are dropped;
/// buckets average each 10 consecutive ranks (the last may be shorter).
AgreementReport word_agreement(std::span<const std::vector<std::string>> reference_sets,
                               std::size_t bucket_size = 10);
AgreementReport word_agreement(const DatasetSplit& split, std::size_t bucket_size = 10);

}  // namespace widgetcap
