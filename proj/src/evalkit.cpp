#include "longattn/evalkit.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <random>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace longattn {

namespace {

using GramCounts = std::unordered_map<std::string, std::size_t>;

std::string gram_key(const Tokens& tokens, std::size_t start, std::size_t n) {
  std::string key = tokens[start];
  for (std::size_t i = 1; i < n; ++i) {
    key += '\x1f';
    key += tokens[start + i];
  }
  return key;
}

void add_gram_counts(GramCounts& counts, const Tokens& tokens, std::size_t n) {
  if (tokens.size() < n) return;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++counts[gram_key(tokens, i, n)];
}

std::size_t total_count(const GramCounts& counts) {
  std::size_t total = 0;
  for (const auto& [_, c] : counts) total += c;
  return total;
}

std::size_t clipped_overlap(const GramCounts& candidate, const GramCounts& reference) {
  std::size_t overlap = 0;
  for (const auto& [gram, c] : reference) {
    auto it = candidate.find(gram);
    if (it != candidate.end()) overlap += std::min(c, it->second);
  }
  return overlap;
}

Tokens flatten(const std::vector<Tokens>& sentences) {
  Tokens out;
  for (const auto& s : sentences) out.insert(out.end(), s.begin(), s.end());
  return out;
}

bool contains_subsequence(const Tokens& haystack, const Tokens& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return needle.empty();
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    bool hit = true;
    for (std::size_t j = 0; j < needle.size(); ++j)
      if (haystack[i + j] != needle[j]) { hit = false; break; }
    if (hit) return true;
  }
  return false;
}

}  // namespace

Tokens tokenize(const std::string& text) {
  Tokens out;
  std::string cur;
  for (unsigned char ch : text) {
    if (std::isalnum(ch)) {
      cur += static_cast<char>(std::tolower(ch));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

double rouge_n_recall(const Tokens& candidate, const Tokens& reference, std::size_t n) {
  if (n < 1) throw std::invalid_argument("rouge_n_recall: gram order must be >= 1");
  GramCounts ref, cand;
  add_gram_counts(ref, reference, n);
  if (ref.empty()) return 0.0;
  add_gram_counts(cand, candidate, n);
  return static_cast<double>(clipped_overlap(cand, ref)) /
         static_cast<double>(total_count(ref));
}

double rouge_n_recall_sentences(const std::vector<Tokens>& candidate,
                                const std::vector<Tokens>& reference, std::size_t n) {
  if (n < 1) throw std::invalid_argument("rouge_n_recall: gram order must be >= 1");
  GramCounts ref, cand;
  for (const auto& s : reference) add_gram_counts(ref, s, n);
  if (ref.empty()) return 0.0;
  for (const auto& s : candidate) add_gram_counts(cand, s, n);
  return static_cast<double>(clipped_overlap(cand, ref)) /
         static_cast<double>(total_count(ref));
}

std::vector<std::size_t> greedy_context(const std::vector<Tokens>& source,
                                        const std::vector<Tokens>& reference,
                                        std::size_t budget) {
  if (budget < 1) throw std::invalid_argument("greedy_context: budget must be >= 1");
  GramCounts ref;
  for (const auto& s : reference) add_gram_counts(ref, s, 2);
  std::vector<std::size_t> picked;
  if (ref.empty() || source.empty()) return picked;
  const double denom = static_cast<double>(total_count(ref));

  std::vector<bool> used(source.size(), false);
  GramCounts selected;
  double current = 0.0;
  while (picked.size() < budget) {
    double best_gain = 0.0;
    std::size_t best = source.size();
    for (std::size_t i = 0; i < source.size(); ++i) {
      if (used[i]) continue;
      GramCounts merged = selected;
      add_gram_counts(merged, source[i], 2);
      const double recall = static_cast<double>(clipped_overlap(merged, ref)) / denom;
      const double gain = recall - current;
      if (gain > best_gain) {  // strict: ties keep the lowest index
        best_gain = gain;
        best = i;
      }
    }
    if (best == source.size() || best_gain <= 0.0) break;
    used[best] = true;
    picked.push_back(best);
    add_gram_counts(selected, source[best], 2);
    current += best_gain;
  }
  return picked;
}

std::vector<ClozeQuestion> make_cloze(const std::vector<Tokens>& reference,
                                      const std::vector<Span>& spans,
                                      const std::vector<Tokens>& context_sentences) {
  const Tokens context = flatten(context_sentences);
  std::vector<ClozeQuestion> out;
  for (std::size_t a = 0; a < spans.size(); ++a) {
    const Span& span = spans[a];
    if (span.sentence >= reference.size())
      throw std::invalid_argument("make_cloze: span sentence index out of range");
    const Tokens& sentence = reference[span.sentence];
    if (span.len == 0 || span.start + span.len > sentence.size())
      throw std::invalid_argument("make_cloze: span token range out of range");

    // drop spans contained in a longer (or earlier, if equal) span
    bool contained = false;
    for (std::size_t b = 0; b < spans.size() && !contained; ++b) {
      if (b == a || spans[b].sentence != span.sentence) continue;
      const bool covers = spans[b].start <= span.start &&
                          span.start + span.len <= spans[b].start + spans[b].len;
      if (covers && (spans[b].len > span.len || (spans[b].len == span.len && b < a)))
        contained = true;
    }
    if (contained) continue;

    ClozeQuestion q;
    q.kind = span.kind;
    q.answer_ref.assign(sentence.begin() + static_cast<std::ptrdiff_t>(span.start),
                        sentence.begin() + static_cast<std::ptrdiff_t>(span.start + span.len));
    q.question.assign(sentence.begin(), sentence.begin() + static_cast<std::ptrdiff_t>(span.start));
    q.question.push_back(kBlankToken);
    q.question.insert(q.question.end(),
                      sentence.begin() + static_cast<std::ptrdiff_t>(span.start + span.len),
                      sentence.end());
    q.context = context;
    if (!contains_subsequence(context, q.answer_ref)) continue;  // excluded sample
    out.push_back(std::move(q));
  }
  return out;
}

double unigram_f1(const Tokens& a, const Tokens& b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  GramCounts ca, cb;
  add_gram_counts(ca, a, 1);
  add_gram_counts(cb, b, 1);
  const double overlap = static_cast<double>(clipped_overlap(ca, cb));
  if (overlap == 0.0) return 0.0;
  const double precision = overlap / static_cast<double>(a.size());
  const double recall = overlap / static_cast<double>(b.size());
  return 2.0 * precision * recall / (precision + recall);
}

Tokens span_match_answer(const ClozeQuestion& q, const Tokens& passage,
                         std::size_t max_answer_len) {
  auto blank = std::find(q.question.begin(), q.question.end(), kBlankToken);
  if (blank == q.question.end())
    throw std::invalid_argument("span_match_answer: question has no blank");
  const std::size_t bp = static_cast<std::size_t>(blank - q.question.begin());
  const Tokens left(q.question.begin(), q.question.begin() + static_cast<std::ptrdiff_t>(bp));
  const Tokens right(q.question.begin() + static_cast<std::ptrdiff_t>(bp) + 1,
                     q.question.end());

  std::size_t best_matched = 0;
  Tokens best_answer;
  for (std::size_t start = 0; start < passage.size(); ++start) {
    // matched suffix of the left context ending right before `start`
    std::size_t lm = 0;
    while (lm < left.size() && lm < start && passage[start - 1 - lm] == left[left.size() - 1 - lm])
      ++lm;
    for (std::size_t len = 1; len <= max_answer_len && start + len <= passage.size(); ++len) {
      std::size_t rm = 0;
      while (rm < right.size() && start + len + rm < passage.size() &&
             passage[start + len + rm] == right[rm])
        ++rm;
      const std::size_t matched = lm + rm;
      if (matched >= 1 && matched > best_matched) {
        best_matched = matched;
        best_answer.assign(passage.begin() + static_cast<std::ptrdiff_t>(start),
                           passage.begin() + static_cast<std::ptrdiff_t>(start + len));
      }
    }
  }
  return best_answer;
}

ApesResult apes_scores(const std::vector<SummaryRecord>& records, const Answerer& answerer,
                       std::size_t context_budget) {
  ApesResult result;
  double apes_total = 0.0, apes_src_total = 0.0;
  for (const auto& record : records) {
    RecordScores scores;
    scores.id = record.id;

    std::vector<std::size_t> picked =
        greedy_context(record.source, record.reference, context_budget);
    std::sort(picked.begin(), picked.end());  // context is fed in source order
    std::vector<Tokens> context_sentences;
    for (std::size_t i : picked) context_sentences.push_back(record.source[i]);

    const auto questions = make_cloze(record.reference, record.spans, context_sentences);
    const Tokens summary = flatten(record.system_summary);

    double apes = 0.0, apes_src = 0.0;
    for (const auto& q : questions) {
      Tokens a_sys, a_cxt;
      try {
        a_sys = answerer(q, summary);
        a_cxt = answerer(q, q.context);
        apes += unigram_f1(a_sys, q.answer_ref);
        apes_src += unigram_f1(a_sys, a_cxt);
      } catch (const std::exception&) {
        ++scores.failures;  // question scored 0
      }
    }
    scores.questions = questions.size();
    if (!questions.empty()) {
      scores.apes = apes / static_cast<double>(questions.size());
      scores.apes_src = apes_src / static_cast<double>(questions.size());
      apes_total += scores.apes;
      apes_src_total += scores.apes_src;
      ++result.scored_records;
    }
    result.per_record.push_back(std::move(scores));
  }
  if (result.scored_records > 0) {
    result.apes_mean = apes_total / static_cast<double>(result.scored_records);
    result.apes_src_mean = apes_src_total / static_cast<double>(result.scored_records);
  }
  return result;
}

std::vector<Claim> factcc_transforms(const Tokens& sentence, const std::vector<Span>& spans,
                                     const std::vector<std::pair<std::string, Tokens>>& pool,
                                     std::uint64_t seed) {
  static const std::unordered_set<std::string> kFiniteVerbs = {
      "is",   "are",  "was",   "were", "be",   "been",  "being", "has",
      "have", "had",  "do",    "does", "did",  "will",  "would", "shall",
      "should", "can", "could", "may",  "might", "must"};

  std::vector<Claim> out;
  out.push_back(Claim{sentence, true, "original"});

  // negation: toggle "not" next to the first finite verb
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (!kFiniteVerbs.count(sentence[i])) continue;
    Tokens negated = sentence;
    if (i + 1 < negated.size() && negated[i + 1] == "not")
      negated.erase(negated.begin() + static_cast<std::ptrdiff_t>(i) + 1);
    else
      negated.insert(negated.begin() + static_cast<std::ptrdiff_t>(i) + 1, "not");
    out.push_back(Claim{std::move(negated), false, "negation"});
    break;
  }

  std::mt19937_64 gen(seed);
  for (const Span& span : spans) {
    if (span.len == 0 || span.start + span.len > sentence.size())
      throw std::invalid_argument("factcc_transforms: span out of range");
    const Tokens original(sentence.begin() + static_cast<std::ptrdiff_t>(span.start),
                          sentence.begin() + static_cast<std::ptrdiff_t>(span.start + span.len));
    std::vector<const Tokens*> candidates;
    for (const auto& [kind, tokens] : pool)
      if (kind == span.kind && tokens != original) candidates.push_back(&tokens);
    if (candidates.empty()) continue;  // no same-kind swap partner; transform skipped
    const Tokens& pick = *candidates[gen() % candidates.size()];
    Tokens swapped(sentence.begin(), sentence.begin() + static_cast<std::ptrdiff_t>(span.start));
    swapped.insert(swapped.end(), pick.begin(), pick.end());
    swapped.insert(swapped.end(),
                   sentence.begin() + static_cast<std::ptrdiff_t>(span.start + span.len),
                   sentence.end());
    out.push_back(Claim{std::move(swapped), false, span.kind + "_swap"});
  }
  return out;
}

std::vector<double> bigram_accumulation(const Tokens& doc, const Tokens& reference,
                                        std::size_t partitions) {
  if (partitions < 1) throw std::invalid_argument("bigram_accumulation: partitions must be >= 1");
  if (reference.size() < 2)
    throw std::invalid_argument("bigram_accumulation: reference has no bigrams");
  std::unordered_set<std::string> ref_bigrams;
  for (std::size_t i = 0; i + 2 <= reference.size(); ++i)
    ref_bigrams.insert(gram_key(reference, i, 2));
  const double denom = static_cast<double>(ref_bigrams.size());

  // near-equal partition sizes; the first (len mod partitions) get one extra
  const std::size_t base = doc.size() / partitions;
  const std::size_t extra = doc.size() % partitions;

  std::vector<double> curve;
  curve.reserve(partitions);
  std::unordered_set<std::string> seen;
  std::size_t pos = 0;
  for (std::size_t p = 0; p < partitions; ++p) {
    const std::size_t len = base + (p < extra ? 1 : 0);
    const std::size_t end = pos + len;
    for (; pos < end; ++pos) {
      if (pos + 1 >= doc.size()) continue;
      const std::string key = gram_key(doc, pos, 2);
      if (ref_bigrams.count(key)) seen.insert(key);
    }
    curve.push_back(static_cast<double>(seen.size()) / denom);
  }
  return curve;
}

CorpusStats corpus_stats(const std::vector<SummaryRecord>& records) {
  if (records.empty()) throw std::invalid_argument("corpus_stats: empty corpus");
  CorpusStats stats;
  stats.documents = records.size();
  std::vector<double> curve_sum(10, 0.0);
  std::size_t curves = 0;
  for (const auto& record : records) {
    const Tokens doc = flatten(record.source);
    const Tokens summary = flatten(record.reference);
    if (summary.empty() || doc.empty())
      throw std::invalid_argument("corpus_stats: record with empty source or reference");
    stats.mean_summary_words += static_cast<double>(summary.size());
    stats.mean_summary_sentences += static_cast<double>(record.reference.size());
    stats.mean_doc_words += static_cast<double>(doc.size());
    stats.mean_compression += static_cast<double>(doc.size()) / static_cast<double>(summary.size());
    if (summary.size() >= 2) {
      const auto curve = bigram_accumulation(doc, summary, 10);
      for (std::size_t i = 0; i < 10; ++i) curve_sum[i] += curve[i];
      ++curves;
    }
  }
  const double denom = static_cast<double>(records.size());
  stats.mean_summary_words /= denom;
  stats.mean_summary_sentences /= denom;
  stats.mean_doc_words /= denom;
  stats.mean_compression /= denom;
  if (curves > 0) {
    stats.accumulation_curve.resize(10);
    for (std::size_t i = 0; i < 10; ++i)
      stats.accumulation_curve[i] = curve_sum[i] / static_cast<double>(curves);
  }
  return stats;
}

std::vector<SummaryRecord> load_corpus_jsonl(std::istream& in) {
  std::vector<SummaryRecord> records;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error("line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("invalid JSON (") + e.what() + ")");
    }
    SummaryRecord record;
    if (!obj.contains("id") || !obj["id"].is_string()) fail("missing string field 'id'");
    record.id = obj["id"].get<std::string>();
    auto read_sentences = [&](const char* field, bool required) {
      std::vector<Tokens> out;
      if (!obj.contains(field)) {
        if (required) fail(std::string("missing field '") + field + "'");
        return out;
      }
      if (!obj[field].is_array()) fail(std::string("field '") + field + "' must be an array");
      for (const auto& s : obj[field]) {
        if (!s.is_string()) fail(std::string("field '") + field + "' must hold strings");
        out.push_back(tokenize(s.get<std::string>()));
      }
      return out;
    };
    record.source = read_sentences("source", true);
    record.reference = read_sentences("reference", true);
    record.system_summary = read_sentences("system_summary", false);
    if (record.source.empty()) fail("'source' must be non-empty");
    if (record.reference.empty()) fail("'reference' must be non-empty");
    if (obj.contains("spans")) {
      if (!obj["spans"].is_array()) fail("'spans' must be an array");
      for (const auto& s : obj["spans"]) {
        Span span;
        try {
          span.sentence = s.at("sentence").get<std::size_t>();
          span.start = s.at("start").get<std::size_t>();
          span.len = s.at("len").get<std::size_t>();
          span.kind = s.at("kind").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
          fail(std::string("invalid span (") + e.what() + ")");
        }
        if (span.sentence >= record.reference.size() || span.len == 0 ||
            span.start + span.len > record.reference[span.sentence].size())
          fail("span out of range for the tokenized reference");
        record.spans.push_back(std::move(span));
      }
    }
    records.push_back(std::move(record));
  }
  return records;
}

}  // namespace longattn
