#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "secovarc/model.hpp"
#include "secovarc/rng.hpp"
#include "secovarc/vocab.hpp"

namespace secovarc {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One task item: two candidate warrants for a claim supported by a reason.
struct ArcInstance {
  std::string id;
  std::string warrant0;
  std::string warrant1;
  int correct_label = 0;  // index of the correct warrant
  std::string reason;
  std::string claim;
  std::string debate_title;
  std::string debate_info;
};

// Header of the task TSV, in column order.
inline constexpr std::string_view kArcColumns[] = {
    "id",     "warrant0", "warrant1",    "correctLabelW0orW1",
    "reason", "claim",    "debateTitle", "debateInfo"};

// Columns are matched by header name; extra columns are ignored.
std::vector<ArcInstance> parse_arc_tsv(const std::filesystem::path& path);
std::vector<ArcInstance> parse_arc_tsv_text(std::string_view text,
                                            const std::string& source = "<text>");
void write_arc_tsv(const std::filesystem::path& path,
                   std::span<const ArcInstance> instances);

// Splits on whitespace, then detaches leading and trailing characters from
// .,!?;:'"()[] as single-character tokens. Case is kept.
std::vector<std::string> tokenize(std::string_view text);

// One warrant scored against its claim and reason.
struct ScoredTriple {
  std::vector<TokenId> claim;
  std::vector<TokenId> reason;
  std::vector<TokenId> warrant;
  int target = 0;
};

// An instance in id space for pairwise evaluation.
struct EncodedInstance {
  std::vector<TokenId> claim;
  std::vector<TokenId> reason;
  std::vector<TokenId> warrant0;
  std::vector<TokenId> warrant1;
  int label = 0;
};

// Token streams of claim, reason and both warrants, instance by instance.
std::vector<std::vector<std::string>> token_streams(
    std::span<const ArcInstance> instances);

EncodedInstance encode_instance(const ArcInstance& inst, const Vocabulary& vocab);
std::vector<EncodedInstance> encode_instances(
    std::span<const ArcInstance> instances, const Vocabulary& vocab);

// Two triples per instance: the correct warrant with target 1, then the other
// with target 0.
std::vector<ScoredTriple> expand_instances(std::span<const ArcInstance> instances,
                                           const Vocabulary& vocab);

// Row-major [rows x width] ids padded with Vocabulary::kPad.
struct PaddedSequences {
  std::vector<TokenId> ids;
  std::vector<std::size_t> lengths;
  std::size_t width = 0;

  std::size_t rows() const { return lengths.size(); }
  SentenceView view(std::size_t r) const {
    return {std::span<const TokenId>(ids).subspan(r * width, width), lengths[r]};
  }
};

struct Batch {
  PaddedSequences claim;
  PaddedSequences reason;
  PaddedSequences warrant;
  std::vector<double> targets;

  std::size_t size() const { return targets.size(); }
};

PaddedSequences pad_sequences(std::span<const std::vector<TokenId>* const> seqs);

// Shuffles with `rng`, chunks into batch_size pieces (last one may be short)
// and pads each role to its longest sentence in the batch.
std::vector<Batch> make_batches(std::span<const ScoredTriple> triples,
                                std::size_t batch_size, Rng& rng);

// Name of synthetic token k.
std::string synthetic_token(std::size_t k);
std::vector<std::string> synthetic_vocabulary(std::size_t vocab_size);

// Synthetic items over vocab_size tokens. Per item, distinct keys x, y, z and a
// distractor q are drawn; the reason holds x and y, the claim y and z, the
// correct warrant x and z, the other warrant x and q. Each sentence adds 2-4
// distinct non-key fillers and places the keys at random positions. The side
// of the correct warrant is a fair coin.
std::vector<ArcInstance> gen_synthetic_arc(std::size_t n, std::size_t vocab_size,
                                           Rng& rng);

// Index of the warrant containing both the reason-only key and the claim-only
// key, recomputed from the text alone; -1 if neither or both qualify.
int synthetic_oracle_label(const ArcInstance& inst);

struct LabeledSequence {
  std::vector<std::string> tokens;
  std::vector<int> labels;  // 1 iff the token occurred earlier in the sequence
};

// Random sequences of 5-15 tokens labelled for duplicate detection.
std::vector<LabeledSequence> gen_pretrain_corpus(std::size_t n,
                                                 std::size_t vocab_size, Rng& rng);
std::vector<int> duplicate_labels(std::span<const std::string> tokens);

// One sequence per line: space-separated tokens, a tab, space-separated labels.
void write_pretrain_corpus(const std::filesystem::path& path,
                           std::span<const LabeledSequence> corpus);
std::vector<LabeledSequence> read_pretrain_corpus(const std::filesystem::path& path);

// Stand-in for a pretrained word-vector inventory: normal(0, stddev) vectors.
nd::Tensor gen_synthetic_vectors(std::size_t vocab_size, std::size_t dim,
                                 double stddev, Rng& rng);

}  // namespace secovarc
