#include "secovarc/vocab.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>

namespace secovarc {

Vocabulary::Vocabulary() : id_to_token_{"<pad>", "<unk>"} {}

TokenId Vocabulary::add(const std::string& token) {
  auto [it, inserted] =
      token_to_id_.try_emplace(token, static_cast<TokenId>(id_to_token_.size()));
  if (inserted) id_to_token_.push_back(token);
  return it->second;
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return token_to_id_.find(token) != token_to_id_.end();
}

const std::string& Vocabulary::token(TokenId id) const {
  return id_to_token_.at(static_cast<std::size_t>(id));
}

std::vector<TokenId> Vocabulary::encode(
    std::span<const std::string> tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Vocabulary build_vocab(std::span<const std::vector<std::string>> streams) {
  Vocabulary vocab;
  for (const auto& stream : streams)
    for (const auto& token : stream) vocab.add(token);
  return vocab;
}

void EmbeddingMatrix::zero_pad_grad() {
  if (!table.has_grad()) return;
  auto g = table.grad();
  std::fill_n(g.begin(), dim(), 0.0);
}

EmbeddingMatrix random_embeddings(const Vocabulary& vocab, std::size_t dim,
                                  Rng& rng) {
  EmbeddingMatrix e;
  e.table = nd::Tensor::zeros({vocab.size(), dim}, true);
  auto data = e.table.data();
  for (std::size_t i = dim; i < data.size(); ++i) {
    data[i] = rng.uniform(-kInitRange, kInitRange);
  }
  return e;
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path,
                                const Vocabulary& vocab, Rng& rng,
                                std::size_t dim) {
  std::ifstream in(path);
  if (!in) {
    throw EmbeddingError("cannot read embedding file " + path.string());
  }
  EmbeddingMatrix e = random_embeddings(vocab, dim, rng);
  auto data = e.table.data();
  std::vector<bool> seen(vocab.size(), false);
  std::vector<double> values(dim);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto space = line.find(' ');
    const std::string_view token(line.data(),
                                 space == std::string::npos ? line.size() : space);
    const char* p = space == std::string::npos ? line.data() + line.size()
                                               : line.data() + space;
    const char* end = line.data() + line.size();
    std::size_t count = 0;
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc() || (next < end && *next != ' ')) {
        throw EmbeddingError(path.string() + ":" + std::to_string(line_no) +
                             ": unparsable value for token '" +
                             std::string(token) + "'");
      }
      if (count < dim) values[count] = v;
      ++count;
      p = next;
    }
    if (count != dim) {
      throw EmbeddingError(path.string() + ":" + std::to_string(line_no) +
                           ": expected " + std::to_string(dim) +
                           " values, found " + std::to_string(count));
    }
    if (!vocab.contains(token)) continue;
    const auto id = static_cast<std::size_t>(vocab.id(token));
    if (seen[id]) continue;
    seen[id] = true;
    ++e.coverage;
    std::copy(values.begin(), values.end(), data.begin() + id * dim);
  }
  return e;
}

void write_embeddings(const std::filesystem::path& path,
                      std::span<const std::string> tokens,
                      const nd::Tensor& vectors) {
  if (vectors.rank() != 2 || vectors.shape()[0] != tokens.size()) {
    throw nd::ShapeError("write_embeddings: " + std::to_string(tokens.size()) +
                         " tokens for vectors " + nd::shape_str(vectors.shape()));
  }
  std::ofstream out(path);
  if (!out) throw EmbeddingError("cannot write " + path.string());
  const std::size_t dim = vectors.shape()[1];
  char buf[32];
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out << tokens[i];
    for (std::size_t j = 0; j < dim; ++j) {
      std::snprintf(buf, sizeof buf, " %.6f", vectors.at(i, j));
      out << buf;
    }
    out << '\n';
  }
}

nd::Tensor embed(nd::Tape& tape, std::span<const TokenId> ids,
                 const EmbeddingMatrix& e) {
  return nd::gather_rows(tape, e.table, ids);
}

}  // namespace secovarc
