#include "secovarc/data.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace secovarc {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_detachable(char c) {
  static constexpr std::string_view kPunct = ".,!?;:'\"()[]";
  return kPunct.find(c) != std::string_view::npos;
}

}  // namespace

std::vector<ArcInstance> parse_arc_tsv_text(std::string_view text,
                                            const std::string& source) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  if (lines.empty()) throw DataError(source + ": missing header row");

  const auto header = split_tabs(lines[0]);
  std::array<std::size_t, std::size(kArcColumns)> column{};
  for (std::size_t c = 0; c < std::size(kArcColumns); ++c) {
    auto it = std::find(header.begin(), header.end(), kArcColumns[c]);
    // The official release spells the first column "#id".
    if (it == header.end() && c == 0) {
      it = std::find(header.begin(), header.end(), std::string_view("#id"));
    }
    if (it == header.end()) {
      throw DataError(source + ": missing column '" + std::string(kArcColumns[c]) + "'");
    }
    column[c] = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<ArcInstance> out;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    if (lines[r].empty()) continue;
    const auto fields = split_tabs(lines[r]);
    const std::string where = source + " row " + std::to_string(r + 1);
    if (fields.size() != header.size()) {
      throw DataError(where + ": expected " + std::to_string(header.size()) +
                      " tab-separated fields, found " + std::to_string(fields.size()));
    }
    auto field = [&](std::size_t c) { return std::string(fields[column[c]]); };
    ArcInstance inst;
    inst.id = field(0);
    inst.warrant0 = field(1);
    inst.warrant1 = field(2);
    const std::string label = field(3);
    if (label != "0" && label != "1") {
      throw DataError(where + ": label '" + label + "' is not 0 or 1");
    }
    inst.correct_label = label == "1" ? 1 : 0;
    inst.reason = field(4);
    inst.claim = field(5);
    inst.debate_title = field(6);
    inst.debate_info = field(7);
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<ArcInstance> parse_arc_tsv(const std::filesystem::path& path) {
  return parse_arc_tsv_text(read_file(path), path.string());
}

void write_arc_tsv(const std::filesystem::path& path,
                   std::span<const ArcInstance> instances) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t c = 0; c < std::size(kArcColumns); ++c) {
    out << (c ? "\t" : "") << kArcColumns[c];
  }
  out << '\n';
  for (const auto& i : instances) {
    out << i.id << '\t' << i.warrant0 << '\t' << i.warrant1 << '\t'
        << i.correct_label << '\t' << i.reason << '\t' << i.claim << '\t'
        << i.debate_title << '\t' << i.debate_info << '\n';
  }
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  while (pos < text.size()) {
    while (pos < text.size() && is_space(text[pos])) ++pos;
    std::size_t end = pos;
    while (end < text.size() && !is_space(text[end])) ++end;
    std::string_view chunk = text.substr(pos, end - pos);
    pos = end;
    if (chunk.empty()) continue;
    while (!chunk.empty() && is_detachable(chunk.front())) {
      tokens.emplace_back(1, chunk.front());
      chunk.remove_prefix(1);
    }
    std::vector<std::string> trailing;
    while (!chunk.empty() && is_detachable(chunk.back())) {
      trailing.emplace_back(1, chunk.back());
      chunk.remove_suffix(1);
    }
    if (!chunk.empty()) tokens.emplace_back(chunk);
    tokens.insert(tokens.end(), trailing.rbegin(), trailing.rend());
  }
  return tokens;
}

std::vector<std::vector<std::string>> token_streams(
    std::span<const ArcInstance> instances) {
  std::vector<std::vector<std::string>> streams;
  streams.reserve(instances.size() * 4);
  for (const auto& i : instances) {
    streams.push_back(tokenize(i.claim));
    streams.push_back(tokenize(i.reason));
    streams.push_back(tokenize(i.warrant0));
    streams.push_back(tokenize(i.warrant1));
  }
  return streams;
}

EncodedInstance encode_instance(const ArcInstance& inst, const Vocabulary& vocab) {
  auto enc = [&](const std::string& text, const char* role) {
    auto ids = vocab.encode(tokenize(text));
    if (ids.empty()) {
      throw DataError("instance '" + inst.id + "': " + role + " is empty");
    }
    return ids;
  };
  return {enc(inst.claim, "claim"), enc(inst.reason, "reason"),
          enc(inst.warrant0, "warrant0"), enc(inst.warrant1, "warrant1"),
          inst.correct_label};
}

std::vector<EncodedInstance> encode_instances(
    std::span<const ArcInstance> instances, const Vocabulary& vocab) {
  std::vector<EncodedInstance> out;
  out.reserve(instances.size());
  for (const auto& i : instances) out.push_back(encode_instance(i, vocab));
  return out;
}

std::vector<ScoredTriple> expand_instances(std::span<const ArcInstance> instances,
                                           const Vocabulary& vocab) {
  std::vector<ScoredTriple> out;
  out.reserve(2 * instances.size());
  for (const auto& inst : instances) {
    EncodedInstance e = encode_instance(inst, vocab);
    auto& correct = e.label == 1 ? e.warrant1 : e.warrant0;
    auto& other = e.label == 1 ? e.warrant0 : e.warrant1;
    out.push_back({e.claim, e.reason, std::move(correct), 1});
    out.push_back({std::move(e.claim), std::move(e.reason), std::move(other), 0});
  }
  return out;
}

PaddedSequences pad_sequences(std::span<const std::vector<TokenId>* const> seqs) {
  PaddedSequences p;
  for (const auto* s : seqs) p.width = std::max(p.width, s->size());
  p.ids.assign(seqs.size() * p.width, Vocabulary::kPad);
  for (std::size_t r = 0; r < seqs.size(); ++r) {
    std::copy(seqs[r]->begin(), seqs[r]->end(), p.ids.begin() + r * p.width);
    p.lengths.push_back(seqs[r]->size());
  }
  return p;
}

std::vector<Batch> make_batches(std::span<const ScoredTriple> triples,
                                std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
  std::vector<std::size_t> order(triples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order.begin(), order.end());

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::vector<const std::vector<TokenId>*> c, r, w;
    Batch b;
    for (std::size_t k = start; k < end; ++k) {
      const ScoredTriple& t = triples[order[k]];
      c.push_back(&t.claim);
      r.push_back(&t.reason);
      w.push_back(&t.warrant);
      b.targets.push_back(static_cast<double>(t.target));
    }
    b.claim = pad_sequences(c);
    b.reason = pad_sequences(r);
    b.warrant = pad_sequences(w);
    batches.push_back(std::move(b));
  }
  return batches;
}

std::string synthetic_token(std::size_t k) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "w%03zu", k);
  return buf;
}

std::vector<std::string> synthetic_vocabulary(std::size_t vocab_size) {
  std::vector<std::string> out;
  out.reserve(vocab_size);
  for (std::size_t k = 0; k < vocab_size; ++k) out.push_back(synthetic_token(k));
  return out;
}

namespace {

// `count` distinct draws from `pool`, removing them from it.
std::vector<std::size_t> draw_distinct(std::vector<std::size_t> pool,
                                       std::size_t count, Rng& rng) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  return out;
}

std::string make_sentence(std::vector<std::size_t> keys,
                          const std::vector<std::size_t>& filler_pool, Rng& rng) {
  const std::size_t n_fill = 2 + rng.below(3);
  auto fillers = draw_distinct(filler_pool, n_fill, rng);
  keys.insert(keys.end(), fillers.begin(), fillers.end());
  rng.shuffle(keys.begin(), keys.end());
  std::string text;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (i) text += ' ';
    text += synthetic_token(keys[i]);
  }
  return text;
}

std::set<std::string> token_set(const std::string& text) {
  auto t = tokenize(text);
  return {t.begin(), t.end()};
}

}  // namespace

std::vector<ArcInstance> gen_synthetic_arc(std::size_t n, std::size_t vocab_size,
                                           Rng& rng) {
  // 4 keys, up to 4 claim fillers and 4 warrant fillers that avoid the claim.
  if (vocab_size < 12) {
    throw std::invalid_argument("synthetic vocabulary of " +
                                std::to_string(vocab_size) +
                                " is too small; need at least 12 tokens");
  }
  std::vector<std::size_t> all(vocab_size);
  for (std::size_t k = 0; k < vocab_size; ++k) all[k] = k;

  std::vector<ArcInstance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto keys = draw_distinct(all, 4, rng);
    const std::size_t x = keys[0], y = keys[1], z = keys[2], q = keys[3];
    std::vector<std::size_t> fillers;
    for (std::size_t k : all)
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) fillers.push_back(k);

    ArcInstance inst;
    inst.id = "synth-" + std::to_string(i);
    inst.reason = make_sentence({x, y}, fillers, rng);
    inst.claim = make_sentence({y, z}, fillers, rng);
    // Warrant fillers never repeat a claim token, so z is the only link
    // between the correct warrant and the claim.
    const auto claim_tokens = token_set(inst.claim);
    std::vector<std::size_t> warrant_fillers;
    for (std::size_t k : fillers)
      if (!claim_tokens.count(synthetic_token(k))) warrant_fillers.push_back(k);
    const std::string correct = make_sentence({x, z}, warrant_fillers, rng);
    const std::string wrong = make_sentence({x, q}, warrant_fillers, rng);
    inst.correct_label = rng.bernoulli(0.5) ? 1 : 0;
    inst.warrant0 = inst.correct_label == 0 ? correct : wrong;
    inst.warrant1 = inst.correct_label == 0 ? wrong : correct;
    inst.debate_title = "synthetic";
    inst.debate_info = "generated";
    out.push_back(std::move(inst));
  }
  return out;
}

int synthetic_oracle_label(const ArcInstance& inst) {
  const auto reason = token_set(inst.reason);
  const auto claim = token_set(inst.claim);
  auto qualifies = [&](const std::string& warrant) {
    bool reason_only = false, claim_only = false;
    for (const auto& t : token_set(warrant)) {
      if (reason.count(t) && !claim.count(t)) reason_only = true;
      if (claim.count(t) && !reason.count(t)) claim_only = true;
    }
    return reason_only && claim_only;
  };
  const bool q0 = qualifies(inst.warrant0);
  const bool q1 = qualifies(inst.warrant1);
  if (q0 == q1) return -1;
  return q0 ? 0 : 1;
}

std::vector<int> duplicate_labels(std::span<const std::string> tokens) {
  std::vector<int> labels;
  std::set<std::string_view> seen;
  for (const auto& t : tokens) {
    labels.push_back(seen.count(t) ? 1 : 0);
    seen.insert(t);
  }
  return labels;
}

std::vector<LabeledSequence> gen_pretrain_corpus(std::size_t n,
                                                 std::size_t vocab_size, Rng& rng) {
  if (vocab_size == 0) throw std::invalid_argument("empty pretraining vocabulary");
  std::vector<LabeledSequence> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = 5 + rng.below(11);
    LabeledSequence s;
    for (std::size_t t = 0; t < len; ++t) {
      s.tokens.push_back(synthetic_token(rng.below(vocab_size)));
    }
    s.labels = duplicate_labels(s.tokens);
    out.push_back(std::move(s));
  }
  return out;
}

void write_pretrain_corpus(const std::filesystem::path& path,
                           std::span<const LabeledSequence> corpus) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& s : corpus) {
    for (std::size_t t = 0; t < s.tokens.size(); ++t) out << (t ? " " : "") << s.tokens[t];
    out << '\t';
    for (std::size_t t = 0; t < s.labels.size(); ++t) out << (t ? " " : "") << s.labels[t];
    out << '\n';
  }
}

std::vector<LabeledSequence> read_pretrain_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<LabeledSequence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (tab == std::string::npos) throw DataError(where + ": missing label column");
    LabeledSequence s;
    std::istringstream toks(line.substr(0, tab));
    for (std::string t; toks >> t;) s.tokens.push_back(t);
    std::istringstream labs(line.substr(tab + 1));
    for (std::string l; labs >> l;) {
      if (l != "0" && l != "1") throw DataError(where + ": label '" + l + "' is not 0 or 1");
      s.labels.push_back(l == "1");
    }
    if (s.tokens.empty() || s.labels.size() != s.tokens.size()) {
      throw DataError(where + ": " + std::to_string(s.tokens.size()) + " tokens but " +
                      std::to_string(s.labels.size()) + " labels");
    }
    out.push_back(std::move(s));
  }
  return out;
}

nd::Tensor gen_synthetic_vectors(std::size_t vocab_size, std::size_t dim,
                                 double stddev, Rng& rng) {
  nd::Tensor t = nd::Tensor::zeros({vocab_size, dim});
  for (double& v : t.data()) v = rng.normal(0.0, stddev);
  return t;
}

}  // namespace secovarc
