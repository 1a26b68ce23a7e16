#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zsasr/corpus.hpp"

namespace zsasr {

struct PairedItem {
  const Utterance* utt = nullptr;
  std::u32string transcript;
};

struct TextItem {
  std::u32string text;
  int lang_id = 0;
};

struct Pools {
  std::vector<const Utterance*> speech;
  std::vector<TextItem> text;
  std::vector<PairedItem> paired;
  // Only the supervised oracle may put Group B pairs in `paired`.
  bool allows_group_b_pairs = false;
};

struct PoolOptions {
  bool in_domain_text = true;
  bool out_domain_text = true;
  bool oracle_group_b_pairs = false;
};

// Borrowing view: the corpus must outlive the pools.
Pools build_pools(const Corpus& corpus, const PoolOptions& opt);

struct BatchSizes {
  std::size_t speech = 4;
  std::size_t text = 16;
  std::size_t paired = 2;
};

struct MixedBatch {
  std::vector<const Utterance*> untranscribed;
  std::vector<TextItem> unspoken_text;
  std::vector<PairedItem> transcribed;
};

// Pure function of (pools, sizes, seed, step): sampling with replacement from
// each enabled stream. Throws when a requested stream's pool is empty or when
// a Group B pair reaches a non-oracle batch.
MixedBatch compose_batch(const Pools& pools, const LanguageRegistry& langs, const BatchSizes& sizes,
                         std::uint64_t step, std::uint64_t seed);

}  // namespace zsasr
