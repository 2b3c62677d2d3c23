// Procedural summary-evaluation machinery: n-gram recall, greedy context
// selection, cloze question construction, unigram-F1 QA scoring over a
// pluggable answerer, rule-based claim transforms, and corpus statistics.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace longattn {

using Tokens = std::vector<std::string>;

// Lowercases and splits on whitespace and punctuation boundaries; tokens are
// maximal runs of alphanumeric characters, punctuation is not emitted.
Tokens tokenize(const std::string& text);

// Marked span over one (tokenized) reference sentence.
struct Span {
  std::size_t sentence = 0;  // reference sentence index
  std::size_t start = 0;     // token offset within the sentence
  std::size_t len = 0;
  std::string kind;  // entity | event | date | number
};

struct SummaryRecord {
  std::string id;
  std::vector<Tokens> source;
  std::vector<Tokens> reference;
  std::vector<Tokens> system_summary;
  std::vector<Span> spans;  // extractor output over the reference, optional
};

// Clipped n-gram overlap count / reference n-gram count. N-grams are taken
// per sentence for multi-sentence inputs (see the *_sentences variant);
// this overload treats its arguments as single token sequences.
double rouge_n_recall(const Tokens& candidate, const Tokens& reference, std::size_t n);
double rouge_n_recall_sentences(const std::vector<Tokens>& candidate,
                                const std::vector<Tokens>& reference, std::size_t n);

// Greedy context construction: iteratively adds the source sentence with the
// largest ROUGE-2 recall gain against the reference; ties break toward the
// lowest sentence index; stops at `budget` sentences or when no sentence
// improves recall. Returns indices in selection order.
std::vector<std::size_t> greedy_context(const std::vector<Tokens>& source,
                                        const std::vector<Tokens>& reference,
                                        std::size_t budget);

inline const char* kBlankToken = "<blank>";

struct ClozeQuestion {
  Tokens question;      // reference sentence with the span replaced by <blank>
  Tokens answer_ref;    // the masked span
  std::string kind;
  Tokens context;       // selected source sentences, flattened in source order
};

// One question per span; spans strictly contained in a longer span of the
// same sentence are dropped, as are questions whose answer does not occur as
// a contiguous token subsequence of the context.
std::vector<ClozeQuestion> make_cloze(const std::vector<Tokens>& reference,
                                      const std::vector<Span>& spans,
                                      const std::vector<Tokens>& context_sentences);

// Multiset token F1. Both empty -> 1.0; exactly one empty -> 0.0.
double unigram_f1(const Tokens& a, const Tokens& b);

// (question, passage) -> answer tokens; must be deterministic.
using Answerer = std::function<Tokens(const ClozeQuestion&, const Tokens& passage)>;

// Extractive stub answerer: finds the passage position where the question's
// tokens around the blank match best (most matched context tokens, then
// earliest position, then shortest answer) and returns the gap tokens.
Tokens span_match_answer(const ClozeQuestion& q, const Tokens& passage,
                         std::size_t max_answer_len = 8);

struct RecordScores {
  std::string id;
  double apes = 0.0;
  double apes_src = 0.0;
  std::size_t questions = 0;
  std::size_t failures = 0;  // answerer errors, scored 0 and flagged
};

struct ApesResult {
  std::vector<RecordScores> per_record;
  double apes_mean = 0.0;      // over records with >= 1 question
  double apes_src_mean = 0.0;
  std::size_t scored_records = 0;
};

// For every question: a_sys = answerer(q, system summary), a_cxt =
// answerer(q, context); per-record APES = mean F1(a_sys, a_ref) and
// APES_src = mean F1(a_sys, a_cxt); corpus means are over scored records.
ApesResult apes_scores(const std::vector<SummaryRecord>& records, const Answerer& answerer,
                       std::size_t context_budget = 5);

struct Claim {
  Tokens tokens;
  bool positive = false;
  std::string transform;  // original | negation | entity_swap | number_swap | ...
};

// Swap pool entries are (kind, span tokens) drawn from the whole record.
// Emits the original sentence as a positive claim, a rule-based negation
// (toggling "not" at the first finite verb from a closed lexicon), and one
// same-kind swap per span when a differing candidate exists. Span offsets
// index into `sentence`; the Span::sentence field is not consulted here.
std::vector<Claim> factcc_transforms(const Tokens& sentence, const std::vector<Span>& spans,
                                     const std::vector<std::pair<std::string, Tokens>>& pool,
                                     std::uint64_t seed);

// Splits the document into `partitions` near-equal token partitions and
// reports, per partition, the fraction of the reference's unique bigrams seen
// in the document prefix ending there. Reference needs >= 2 tokens.
std::vector<double> bigram_accumulation(const Tokens& doc, const Tokens& reference,
                                        std::size_t partitions = 10);

struct CorpusStats {
  std::size_t documents = 0;
  double mean_summary_words = 0.0;
  double mean_summary_sentences = 0.0;
  double mean_doc_words = 0.0;
  double mean_compression = 0.0;               // mean over records of doc/summary words
  std::vector<double> accumulation_curve;      // mean 10-point curve
};

CorpusStats corpus_stats(const std::vector<SummaryRecord>& records);

// Line-delimited records, one JSON object per line with fields id, source,
// reference, system_summary and optional spans. Throws std::runtime_error
// mentioning the 1-based line number on malformed input.
std::vector<SummaryRecord> load_corpus_jsonl(std::istream& in);

}  // namespace longattn
