#include "zsasr/batch.hpp"

#include <stdexcept>

#include "zsasr/rng.hpp"

namespace zsasr {

Pools build_pools(const Corpus& corpus, const PoolOptions& opt) {
  Pools p;
  p.allows_group_b_pairs = opt.oracle_group_b_pairs;
  for (const auto& u : corpus.utterances) {
    if (u.split != Split::train) continue;
    p.speech.push_back(&u);
    const auto& lang = corpus.languages.get(u.lang_id);
    if (lang.group == Group::A) {
      if (u.transcript) p.paired.push_back({&u, *u.transcript});
    } else if (opt.oracle_group_b_pairs) {
      auto it = corpus.withheld_transcripts.find(u.utt_id);
      if (it != corpus.withheld_transcripts.end()) p.paired.push_back({&u, it->second});
    }
  }
  for (const auto& t : corpus.text) {
    if ((t.in_domain && opt.in_domain_text) || (!t.in_domain && opt.out_domain_text)) {
      p.text.push_back({t.text, t.lang_id});
    }
  }
  return p;
}

MixedBatch compose_batch(const Pools& pools, const LanguageRegistry& langs, const BatchSizes& sizes,
                         std::uint64_t step, std::uint64_t seed) {
  auto need = [](std::size_t want, std::size_t have, const char* name) {
    if (want > 0 && have == 0) throw std::invalid_argument(std::string("requested stream is empty: ") + name);
  };
  need(sizes.speech, pools.speech.size(), "untranscribed speech");
  need(sizes.text, pools.text.size(), "unspoken text");
  need(sizes.paired, pools.paired.size(), "transcribed speech");

  MixedBatch b;
  Rng rs(seed, "batch/speech", step), rt(seed, "batch/text", step), rp(seed, "batch/paired", step);
  auto draw = [](Rng& r, std::size_t n) { return std::size_t(r.uniform_int(0, std::int64_t(n) - 1)); };
  for (std::size_t i = 0; i < sizes.speech; ++i) b.untranscribed.push_back(pools.speech[draw(rs, pools.speech.size())]);
  for (std::size_t i = 0; i < sizes.text; ++i) b.unspoken_text.push_back(pools.text[draw(rt, pools.text.size())]);
  for (std::size_t i = 0; i < sizes.paired; ++i) {
    const auto& item = pools.paired[draw(rp, pools.paired.size())];
    if (!pools.allows_group_b_pairs && langs.get(item.utt->lang_id).group == Group::B) {
      throw std::logic_error("Group B pair " + item.utt->utt_id + " reached a zero-supervised batch");
    }
    b.transcribed.push_back(item);
  }
  return b;
}

}  // namespace zsasr
