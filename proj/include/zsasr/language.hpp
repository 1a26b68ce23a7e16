#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace zsasr {

enum class Group { A, B };
enum class TextUnit { grapheme, byte, phoneme };

std::string to_string(Group g);
std::string to_string(TextUnit u);
Group parse_group(const std::string& s);
TextUnit parse_text_unit(const std::string& s);

using Token = std::uint32_t;
using TokenSeq = std::vector<Token>;

constexpr char32_t kSpace = U' ';

struct LanguageSpec {
  int lang_id = 0;
  std::string name;
  Group group = Group::A;
  // Sorted; whitespace is universal and never listed here.
  std::vector<char32_t> script;
  std::map<char32_t, std::vector<int>> lexicon;
  TextUnit text_unit = TextUnit::grapheme;
};

void validate_language(const LanguageSpec& l);

class LanguageRegistry {
 public:
  void add(LanguageSpec spec);
  const LanguageSpec& get(int lang_id) const;
  bool contains(int lang_id) const { return by_id_.count(lang_id) != 0; }
  const std::vector<LanguageSpec>& all() const { return langs_; }
  std::vector<int> ids(Group g) const;
  std::size_t size() const { return langs_.size(); }

 private:
  std::vector<LanguageSpec> langs_;
  std::map<int, std::size_t> by_id_;
};

// ---- UTF-8 ------------------------------------------------------------

std::string utf8_encode(const std::u32string& text);
// Throws std::invalid_argument on malformed input.
std::u32string utf8_decode(const std::string& bytes);

TokenSeq byte_encode(const std::u32string& text);
std::u32string byte_decode(const TokenSeq& ids);

// ---- Vocabularies -----------------------------------------------------

// Dense token table with the blank placed after the last symbol.
class Vocab {
 public:
  Vocab() = default;
  Vocab(TextUnit kind, std::vector<Token> symbols);

  static Vocab bytes();
  static Vocab phonemes(int n_phonemes);  // n_phonemes regular units + pause

  TextUnit kind() const { return kind_; }
  std::size_t size() const { return symbols_.size(); }  // without blank
  std::size_t blank_id() const { return symbols_.size(); }
  std::size_t output_dim() const { return symbols_.size() + 1; }
  const std::vector<Token>& symbols() const { return symbols_; }
  bool contains(Token t) const { return ids_.count(t) != 0; }
  std::size_t id(Token t) const;
  Token symbol(std::size_t id) const { return symbols_.at(id); }

  std::vector<std::size_t> encode(const TokenSeq& tokens) const;
  TokenSeq decode(const std::vector<std::size_t>& ids) const;

 private:
  TextUnit kind_ = TextUnit::grapheme;
  std::vector<Token> symbols_;
  std::map<Token, std::size_t> ids_;
};

struct GraphemeInventory {
  std::map<int, std::set<Token>> per_language;  // whitespace excluded
  Vocab global;                                 // union plus the space symbol
};

// texts: lang_id -> sentences.
GraphemeInventory grapheme_vocab(const std::map<int, std::vector<std::u32string>>& corpus);

// Unit inventory of a language's script at the given text unit (whitespace
// excluded). Phoneme inventories come from the lexicon.
std::set<Token> unit_inventory(const LanguageSpec& l, TextUnit unit);

// 1 - |union_k (V(l) & V(A_k))| / |V(l)|
double unseen_grapheme_ratio(const std::set<Token>& target,
                             const std::vector<std::set<Token>>& group_a);
double unseen_grapheme_ratio(const LanguageSpec& target, const std::vector<LanguageSpec>& group_a,
                             TextUnit unit = TextUnit::grapheme);

// Oracle G2P: concatenated lexicon entries; whitespace maps to the pause unit.
std::vector<int> to_phonemes(const std::u32string& text, const LanguageSpec& lang, int pause_id);

// Token sequence for a transcript at a given unit.
TokenSeq tokenize(const std::u32string& text, const LanguageSpec& lang, TextUnit unit, int pause_id);

}  // namespace zsasr
