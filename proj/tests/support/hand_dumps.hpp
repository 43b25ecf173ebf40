#pragma once

// Hand-built three-layer dumps whose expected attribute rates and probability
// sums are known by construction. Probabilities are multiples of 2^-12, so all
// sums are exact in double precision.

#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "domainbench/attribute.hpp"
#include "domainbench/tokens.hpp"

namespace testsupport {

struct HandDump {
  domainbench::attribute::LayerDump dump;
  domainbench::tokens::TokenList list;
  domainbench::WordSet stopwords;
  std::size_t k = 50;
  std::size_t pool_size = 0;
  // Expected values per layer.
  std::vector<double> rate;
  std::vector<double> in_list;
  std::vector<double> out_list;
};

inline HandDump make_hand_dump(std::uint64_t seed, std::size_t layers = 3) {
  std::mt19937_64 rng(seed);
  constexpr double kUnit = 1.0 / 4096.0;
  HandDump h;
  h.stopwords = {"the", "of", "and", "with"};
  h.pool_size = 60;
  h.list.keyword = "kw" + std::to_string(seed);
  h.list.tokenizer_id = "tok";
  for (int i = 0; i < 80; ++i) {
    // Entries past pool_size exist in the list but are outside the pool.
    h.list.tokens.push_back({" pw" + std::to_string(i), 300 + i, 1000 - i});
  }
  h.dump.model_id = "hand";
  h.dump.tokenizer_id = "tok";
  h.dump.subject = h.list.keyword;
  h.dump.normalized = true;
  std::uniform_int_distribution<int> coin(0, 9);
  std::uniform_int_distribution<int> pool_word(0, 59);
  std::uniform_int_distribution<int> outside(60, 79);
  for (std::size_t l = 0; l < layers; ++l) {
    // Build the raw list top-down; units are assigned afterwards in descending order.
    std::vector<std::string> raw;
    std::vector<bool> clean_in;
    std::vector<bool> is_clean;
    std::set<std::string> distinct;
    std::size_t clean_count = 0;
    while (clean_count < h.k) {
      const int c = coin(rng);
      if (c == 0) {
        raw.push_back(c % 2 ? " the" : " of");
        is_clean.push_back(false);
        clean_in.push_back(false);
        continue;
      }
      if (c == 1) {
        raw.push_back(" ab");  // stripped length 2
        is_clean.push_back(false);
        clean_in.push_back(false);
        continue;
      }
      std::string tok;
      bool in = false;
      if (c < 6) {
        const int w = pool_word(rng);
        // Pool tokens appear with or without the leading space.
        tok = (coin(rng) < 2 ? "pw" : " pw") + std::to_string(w);
        in = true;
        distinct.insert("pw" + std::to_string(w));
      } else if (c < 8) {
        tok = " pw" + std::to_string(outside(rng));
      } else {
        tok = " nw" + std::to_string(coin(rng) * 10 + coin(rng));
      }
      raw.push_back(tok);
      is_clean.push_back(true);
      clean_in.push_back(in);
      ++clean_count;
    }
    // A tail beyond the first k clean tokens must not count.
    for (int t = 0; t < 5; ++t) {
      raw.push_back(" pw" + std::to_string(t));
      is_clean.push_back(false);
      clean_in.push_back(false);
    }
    domainbench::attribute::Layer layer;
    std::int64_t in_units = 0;
    std::int64_t out_units = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const auto units = static_cast<std::int64_t>(raw.size() - i);
      layer.topk.emplace_back(raw[i], static_cast<double>(units) * kUnit);
      if (is_clean[i]) (clean_in[i] ? in_units : out_units) += units;
    }
    layer.target_rank = static_cast<std::int64_t>(l + 1);
    layer.target_prob = 0.5;
    h.dump.layers.push_back(std::move(layer));
    h.rate.push_back(static_cast<double>(distinct.size()) * 2.0);  // k = 50
    h.in_list.push_back(static_cast<double>(in_units) * kUnit);
    h.out_list.push_back(static_cast<double>(out_units) * kUnit);
  }
  return h;
}

}  // namespace testsupport
