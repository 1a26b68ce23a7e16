#include "zsasr/language.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace zsasr {

namespace {

std::string cp_hex(char32_t c) {
  std::ostringstream os;
  os << "U+" << std::uppercase << std::hex << std::uint32_t(c);
  return os.str();
}

bool is_space(char32_t c) { return c == kSpace; }

}  // namespace

std::string to_string(Group g) { return g == Group::A ? "A" : "B"; }

std::string to_string(TextUnit u) {
  switch (u) {
    case TextUnit::grapheme: return "grapheme";
    case TextUnit::byte: return "byte";
    case TextUnit::phoneme: return "phoneme";
  }
  return "?";
}

Group parse_group(const std::string& s) {
  if (s == "A") return Group::A;
  if (s == "B") return Group::B;
  throw std::invalid_argument("unknown group: " + s);
}

TextUnit parse_text_unit(const std::string& s) {
  if (s == "grapheme") return TextUnit::grapheme;
  if (s == "byte") return TextUnit::byte;
  if (s == "phoneme") return TextUnit::phoneme;
  throw std::invalid_argument("unknown text unit: " + s);
}

void validate_language(const LanguageSpec& l) {
  if (l.script.empty()) throw std::invalid_argument("language " + l.name + " has an empty script");
  if (!std::is_sorted(l.script.begin(), l.script.end()) ||
      std::adjacent_find(l.script.begin(), l.script.end()) != l.script.end()) {
    throw std::invalid_argument("language " + l.name + " script must be sorted and unique");
  }
  for (const auto& [g, ph] : l.lexicon) {
    if (!std::binary_search(l.script.begin(), l.script.end(), g)) {
      throw std::invalid_argument("language " + l.name + " lexicon key " + cp_hex(g) +
                                  " is not in its script");
    }
    if (ph.empty()) throw std::invalid_argument("empty pronunciation for " + cp_hex(g));
  }
}

void LanguageRegistry::add(LanguageSpec spec) {
  validate_language(spec);
  if (by_id_.count(spec.lang_id)) {
    throw std::invalid_argument("duplicate lang_id " + std::to_string(spec.lang_id));
  }
  by_id_[spec.lang_id] = langs_.size();
  langs_.push_back(std::move(spec));
}

const LanguageSpec& LanguageRegistry::get(int lang_id) const {
  auto it = by_id_.find(lang_id);
  if (it == by_id_.end()) throw std::out_of_range("unknown lang_id " + std::to_string(lang_id));
  return langs_[it->second];
}

std::vector<int> LanguageRegistry::ids(Group g) const {
  std::vector<int> out;
  for (const auto& l : langs_)
    if (l.group == g) out.push_back(l.lang_id);
  return out;
}

std::string utf8_encode(const std::u32string& text) {
  std::string out;
  for (char32_t c : text) {
    if (c > 0x10FFFF || (c >= 0xD800 && c <= 0xDFFF)) {
      throw std::invalid_argument("invalid code point " + cp_hex(c));
    }
    if (c < 0x80) {
      out.push_back(char(c));
    } else if (c < 0x800) {
      out.push_back(char(0xC0 | (c >> 6)));
      out.push_back(char(0x80 | (c & 0x3F)));
    } else if (c < 0x10000) {
      out.push_back(char(0xE0 | (c >> 12)));
      out.push_back(char(0x80 | ((c >> 6) & 0x3F)));
      out.push_back(char(0x80 | (c & 0x3F)));
    } else {
      out.push_back(char(0xF0 | (c >> 18)));
      out.push_back(char(0x80 | ((c >> 12) & 0x3F)));
      out.push_back(char(0x80 | ((c >> 6) & 0x3F)));
      out.push_back(char(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

std::u32string utf8_decode(const std::string& bytes) {
  std::u32string out;
  std::size_t i = 0;
  auto cont = [&](std::size_t k) -> std::uint32_t {
    if (k >= bytes.size() || (std::uint8_t(bytes[k]) & 0xC0) != 0x80) {
      throw std::invalid_argument("malformed UTF-8 at byte " + std::to_string(k));
    }
    return std::uint8_t(bytes[k]) & 0x3F;
  };
  while (i < bytes.size()) {
    const std::uint8_t b = std::uint8_t(bytes[i]);
    std::uint32_t c;
    std::size_t n;
    if (b < 0x80) {
      c = b;
      n = 1;
    } else if ((b & 0xE0) == 0xC0) {
      c = ((b & 0x1Fu) << 6) | cont(i + 1);
      n = 2;
      if (c < 0x80) throw std::invalid_argument("overlong UTF-8 sequence");
    } else if ((b & 0xF0) == 0xE0) {
      c = ((b & 0x0Fu) << 12) | (cont(i + 1) << 6) | cont(i + 2);
      n = 3;
      if (c < 0x800 || (c >= 0xD800 && c <= 0xDFFF)) throw std::invalid_argument("invalid UTF-8 sequence");
    } else if ((b & 0xF8) == 0xF0) {
      c = ((b & 0x07u) << 18) | (cont(i + 1) << 12) | (cont(i + 2) << 6) | cont(i + 3);
      n = 4;
      if (c < 0x10000 || c > 0x10FFFF) throw std::invalid_argument("invalid UTF-8 sequence");
    } else {
      throw std::invalid_argument("malformed UTF-8 lead byte at " + std::to_string(i));
    }
    out.push_back(char32_t(c));
    i += n;
  }
  return out;
}

TokenSeq byte_encode(const std::u32string& text) {
  const std::string s = utf8_encode(text);
  TokenSeq out;
  out.reserve(s.size());
  for (char ch : s) out.push_back(std::uint8_t(ch));
  return out;
}

std::u32string byte_decode(const TokenSeq& ids) {
  std::string s;
  s.reserve(ids.size());
  for (Token t : ids) {
    if (t > 0xFF) throw std::invalid_argument("byte id out of range: " + std::to_string(t));
    s.push_back(char(std::uint8_t(t)));
  }
  return utf8_decode(s);
}

Vocab::Vocab(TextUnit kind, std::vector<Token> symbols) : kind_(kind), symbols_(std::move(symbols)) {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (!ids_.emplace(symbols_[i], i).second) {
      throw std::invalid_argument("duplicate vocabulary symbol " + std::to_string(symbols_[i]));
    }
  }
}

Vocab Vocab::bytes() {
  std::vector<Token> s(256);
  for (Token i = 0; i < 256; ++i) s[i] = i;
  return Vocab(TextUnit::byte, std::move(s));
}

Vocab Vocab::phonemes(int n_phonemes) {
  std::vector<Token> s(std::size_t(n_phonemes) + 1);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = Token(i);
  return Vocab(TextUnit::phoneme, std::move(s));
}

std::size_t Vocab::id(Token t) const {
  auto it = ids_.find(t);
  if (it == ids_.end()) {
    throw std::out_of_range(to_string(kind_) + " symbol " + std::to_string(t) + " not in vocabulary");
  }
  return it->second;
}

std::vector<std::size_t> Vocab::encode(const TokenSeq& tokens) const {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (Token t : tokens) out.push_back(id(t));
  return out;
}

TokenSeq Vocab::decode(const std::vector<std::size_t>& ids) const {
  TokenSeq out;
  out.reserve(ids.size());
  for (auto i : ids) {
    if (i >= symbols_.size()) throw std::out_of_range("vocabulary id " + std::to_string(i));
    out.push_back(symbols_[i]);
  }
  return out;
}

GraphemeInventory grapheme_vocab(const std::map<int, std::vector<std::u32string>>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("grapheme_vocab needs a nonempty corpus");
  GraphemeInventory inv;
  std::set<Token> all{Token(kSpace)};
  for (const auto& [lang, texts] : corpus) {
    auto& s = inv.per_language[lang];
    for (const auto& t : texts)
      for (char32_t c : t)
        if (!is_space(c)) s.insert(Token(c));
    all.insert(s.begin(), s.end());
  }
  inv.global = Vocab(TextUnit::grapheme, std::vector<Token>(all.begin(), all.end()));
  return inv;
}

std::set<Token> unit_inventory(const LanguageSpec& l, TextUnit unit) {
  std::set<Token> out;
  for (char32_t c : l.script) {
    switch (unit) {
      case TextUnit::grapheme: out.insert(Token(c)); break;
      case TextUnit::byte:
        for (Token b : byte_encode(std::u32string(1, c))) out.insert(b);
        break;
      case TextUnit::phoneme: {
        auto it = l.lexicon.find(c);
        if (it != l.lexicon.end())
          for (int p : it->second) out.insert(Token(p));
        break;
      }
    }
  }
  return out;
}

double unseen_grapheme_ratio(const std::set<Token>& target, const std::vector<std::set<Token>>& group_a) {
  if (target.empty()) throw std::invalid_argument("unseen grapheme ratio of an empty vocabulary");
  std::size_t seen = 0;
  for (Token t : target) {
    for (const auto& a : group_a) {
      if (a.count(t)) {
        ++seen;
        break;
      }
    }
  }
  return 1.0 - double(seen) / double(target.size());
}

double unseen_grapheme_ratio(const LanguageSpec& target, const std::vector<LanguageSpec>& group_a,
                             TextUnit unit) {
  std::vector<std::set<Token>> a;
  for (const auto& l : group_a) a.push_back(unit_inventory(l, unit));
  return unseen_grapheme_ratio(unit_inventory(target, unit), a);
}

std::vector<int> to_phonemes(const std::u32string& text, const LanguageSpec& lang, int pause_id) {
  std::vector<int> out;
  for (char32_t c : text) {
    if (is_space(c)) {
      out.push_back(pause_id);
      continue;
    }
    auto it = lang.lexicon.find(c);
    if (it == lang.lexicon.end()) {
      throw std::out_of_range("grapheme " + cp_hex(c) + " is not in the lexicon of " + lang.name);
    }
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

TokenSeq tokenize(const std::u32string& text, const LanguageSpec& lang, TextUnit unit, int pause_id) {
  switch (unit) {
    case TextUnit::grapheme: return TokenSeq(text.begin(), text.end());
    case TextUnit::byte: return byte_encode(text);
    case TextUnit::phoneme: {
      auto ph = to_phonemes(text, lang, pause_id);
      return TokenSeq(ph.begin(), ph.end());
    }
  }
  return {};
}

}  // namespace zsasr
