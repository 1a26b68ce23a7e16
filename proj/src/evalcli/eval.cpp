#include "zsasr/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace zsasr {

std::size_t edit_distance(std::u32string_view a, std::u32string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double cer(std::u32string_view ref, std::u32string_view hyp) {
  if (ref.empty()) throw std::invalid_argument("cer: empty reference");
  return double(edit_distance(ref, hyp)) / double(ref.size());
}

void fill_ugr(EvalReport& rep, const LanguageRegistry& langs) {
  std::vector<LanguageSpec> group_a;
  for (const auto& l : langs.all())
    if (l.group == Group::A) group_a.push_back(l);
  for (auto& row : rep.languages) {
    if (row.group != Group::B) continue;
    const auto& l = langs.get(row.lang_id);
    row.ugr_grapheme = unseen_grapheme_ratio(l, group_a, TextUnit::grapheme);
    row.ugr_byte = unseen_grapheme_ratio(l, group_a, TextUnit::byte);
  }
}

void fill_means(EvalReport& rep) {
  double sa = 0, sb = 0;
  std::size_t na = 0, nb = 0;
  for (const auto& r : rep.languages) {
    if (r.group == Group::A) {
      sa += r.cer;
      ++na;
    } else {
      sb += r.cer;
      ++nb;
    }
  }
  rep.mean_a = na ? sa / double(na) : 0.0;
  rep.mean_b = nb ? sb / double(nb) : 0.0;
  rep.mean_all = (na + nb) ? (sa + sb) / double(na + nb) : 0.0;
}

namespace {

std::u32string strip_spaces(std::u32string s) {
  s.erase(std::remove(s.begin(), s.end(), kSpace), s.end());
  return s;
}

}  // namespace

EvalReport evaluate(const Corpus& corpus, const Transcriber& transcribe, const EvalOptions& opt) {
  EvalReport rep;
  for (const auto& l : corpus.languages.all()) {
    LanguageScore row;
    row.lang_id = l.lang_id;
    row.name = l.name;
    row.group = l.group;
    for (const auto& u : corpus.utterances) {
      if (u.split != Split::test || u.lang_id != l.lang_id || !u.transcript) continue;
      auto ref = *u.transcript, hyp = transcribe(u);
      if (!opt.count_spaces) {
        ref = strip_spaces(ref);
        hyp = strip_spaces(hyp);
      }
      if (ref.empty()) continue;
      row.edits += edit_distance(ref, hyp);
      row.ref_chars += ref.size();
      ++row.utterances;
    }
    if (row.utterances == 0) {
      rep.warnings.push_back("language " + l.name + " has no test utterances; omitted");
      continue;
    }
    row.cer = double(row.edits) / double(row.ref_chars);
    rep.languages.push_back(row);
  }
  fill_ugr(rep, corpus.languages);
  fill_means(rep);
  return rep;
}

EvalReport evaluate(const Model& model, const Corpus& corpus, const EvalOptions& opt) {
  return evaluate(corpus, [&model](const Utterance& u) { return model.transcribe(u); }, opt);
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void write_report_csv(const std::filesystem::path& path, const EvalReport& rep) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# cer: edits / reference chars within a language; group means are unweighted over languages\n";
  out << "kind,preset,seed,step,lang_id,lang,group,utterances,ref_chars,edits,cer,ugr_grapheme,ugr_byte\n";
  for (const auto& r : rep.languages) {
    out << "language," << rep.preset << ',' << rep.seed << ',' << rep.step << ',' << r.lang_id << ',' << r.name << ','
        << to_string(r.group) << ',' << r.utterances << ',' << r.ref_chars << ',' << r.edits << ',' << fmt(r.cer)
        << ',' << fmt(r.ugr_grapheme) << ',' << fmt(r.ugr_byte) << '\n';
  }
  auto mean_row = [&](const char* name, const char* group, double v) {
    out << "mean," << rep.preset << ',' << rep.seed << ',' << rep.step << ",-1," << name << ',' << group
        << ",0,0,0," << fmt(v) << ",0,0\n";
  };
  mean_row("mean_A", "A", rep.mean_a);
  mean_row("mean_B", "B", rep.mean_b);
  mean_row("mean_AB", "AB", rep.mean_all);
}

EvalReport read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  EvalReport rep;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 13) throw std::runtime_error("malformed report row in " + path.string() + ": " + line);
    rep.preset = f[1];
    rep.seed = std::stoull(f[2]);
    rep.step = std::stoull(f[3]);
    if (f[0] == "language") {
      LanguageScore r;
      r.lang_id = std::stoi(f[4]);
      r.name = f[5];
      r.group = parse_group(f[6]);
      r.utterances = std::stoull(f[7]);
      r.ref_chars = std::stoull(f[8]);
      r.edits = std::stoull(f[9]);
      r.cer = std::stod(f[10]);
      r.ugr_grapheme = std::stod(f[11]);
      r.ugr_byte = std::stod(f[12]);
      rep.languages.push_back(r);
    } else if (f[5] == "mean_A") {
      rep.mean_a = std::stod(f[10]);
    } else if (f[5] == "mean_B") {
      rep.mean_b = std::stod(f[10]);
    } else if (f[5] == "mean_AB") {
      rep.mean_all = std::stod(f[10]);
    }
  }
  return rep;
}

std::string format_report(const EvalReport& rep) {
  std::ostringstream o;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-10s %-5s %6s %8s %9s %9s\n", "language", "group", "utts", "CER(%)", "UGR(g)",
                "UGR(byte)");
  o << buf;
  for (const auto& r : rep.languages) {
    std::snprintf(buf, sizeof buf, "%-10s %-5s %6zu %8.1f %9.2f %9.2f\n", r.name.c_str(), to_string(r.group).c_str(),
                  r.utterances, 100 * r.cer, r.ugr_grapheme, r.ugr_byte);
    o << buf;
  }
  std::snprintf(buf, sizeof buf, "mean A %.1f  mean B %.1f  mean A+B %.1f\n", 100 * rep.mean_a, 100 * rep.mean_b,
                100 * rep.mean_all);
  o << buf;
  return o.str();
}

}  // namespace zsasr
