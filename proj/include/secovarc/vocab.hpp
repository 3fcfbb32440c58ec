#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "secovarc/nd.hpp"
#include "secovarc/rng.hpp"

namespace secovarc {

using TokenId = int;

// Maps tokens to dense ids. Ids 0 and 1 are reserved for padding and unknown
// tokens; their display names are never looked up, so no text token can map
// onto them.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;

  Vocabulary();

  // Returns the existing id or assigns the next one.
  TokenId add(const std::string& token);
  // kUnk when absent.
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const { return id_to_token_.size(); }

  std::vector<TokenId> encode(std::span<const std::string> tokens) const;

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const {
      return std::hash<std::string_view>{}(s);
    }
  };
  std::unordered_map<std::string, TokenId, Hash, std::equal_to<>> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// Ids are assigned in first-occurrence order across the streams.
Vocabulary build_vocab(std::span<const std::vector<std::string>> streams);

class EmbeddingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Trainable lookup table. Stored as [|V| x dim] so that the vector of token k
// is the contiguous row k; row kPad is all zeros.
struct EmbeddingMatrix {
  nd::Tensor table;
  std::size_t coverage = 0;  // tokens initialized from the vector file

  std::size_t dim() const { return table.shape()[1]; }
  std::size_t vocab_size() const { return table.shape()[0]; }
  void zero_pad_grad();
};

inline constexpr std::size_t kDefaultWordDim = 300;
inline constexpr double kInitRange = 0.005;

// Every non-reserved row drawn from uniform(-kInitRange, kInitRange).
EmbeddingMatrix random_embeddings(const Vocabulary& vocab, std::size_t dim,
                                  Rng& rng);

// Reads a word-vector text file ("token v1 ... v_dim" per line). Vocabulary
// tokens present in the file take the file vector; the rest keep their random
// initialization. Tokens outside the vocabulary are skipped.
EmbeddingMatrix load_embeddings(const std::filesystem::path& path,
                                const Vocabulary& vocab, Rng& rng,
                                std::size_t dim = kDefaultWordDim);

void write_embeddings(const std::filesystem::path& path,
                      std::span<const std::string> tokens,
                      const nd::Tensor& vectors);

// [n x dim] rows of the table; participates in the tape.
nd::Tensor embed(nd::Tape& tape, std::span<const TokenId> ids,
                 const EmbeddingMatrix& e);

}  // namespace secovarc
