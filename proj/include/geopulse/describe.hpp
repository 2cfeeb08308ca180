#ifndef GEOPULSE_DESCRIBE_HPP
#define GEOPULSE_DESCRIBE_HPP

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "geopulse/detect.hpp"

namespace geopulse {

namespace detail {

// Number of bytes in the UTF-8 sequence starting at c.
inline int utf8_len(unsigned char c) {
  if (c < 0x80) return 1;
  if ((c & 0xE0) == 0xC0) return 2;
  if ((c & 0xF0) == 0xE0) return 3;
  if ((c & 0xF8) == 0xF0) return 4;
  return 1;  // invalid byte, treat as one
}

inline size_t count_codepoints(const std::string& s) {
  size_t n = 0;
  for (size_t i = 0; i < s.size(); i += utf8_len(static_cast<unsigned char>(s[i])))
    ++n;
  return n;
}

// ASCII + Latin-1 supplement lowercase; other scripts pass through.
inline std::string lowercase_utf8(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (size_t i = 0; i < s.size();) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    int len = utf8_len(c);
    if (len == 1) {
      out.push_back(static_cast<char>(std::tolower(c)));
      ++i;
      continue;
    }
    if (len == 2 && c == 0xC3 && i + 1 < s.size()) {
      unsigned char c2 = static_cast<unsigned char>(s[i + 1]);
      // U+00C0..U+00DE -> U+00E0..U+00FE (except U+00D7, multiplication sign)
      if (c2 >= 0x80 && c2 <= 0x9E && c2 != 0x97) c2 += 0x20;
      out.push_back(static_cast<char>(c));
      out.push_back(static_cast<char>(c2));
      i += 2;
      continue;
    }
    out.append(s, i, static_cast<size_t>(len));
    i += static_cast<size_t>(len);
  }
  return out;
}

inline bool is_ascii_word_char(unsigned char c) {
  return std::isalnum(c) || c == '_' || c == '\'';
}

}  // namespace detail

// Unicode-aware lowercase word tokens. URLs and @-mentions are dropped, a
// leading '#' is stripped but the tag word kept, tokens shorter than 2 code
// points are dropped.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  size_t i = 0;
  size_t n = text.size();
  while (i < n) {
    // Split on ASCII whitespace.
    while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    size_t start = i;
    while (i < n && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i == start) continue;
    std::string word = text.substr(start, i - start);

    if (word[0] == '@') continue;
    if (word.rfind("http://", 0) == 0 || word.rfind("https://", 0) == 0 ||
        word.rfind("www.", 0) == 0)
      continue;
    if (word[0] == '#') word = word.substr(1);

    // Strip non-word ASCII characters from both ends; multibyte sequences
    // count as word characters (accented letters, CJK, emoji all kept).
    size_t b = 0, e = word.size();
    while (b < e && static_cast<unsigned char>(word[b]) < 0x80 &&
           !detail::is_ascii_word_char(static_cast<unsigned char>(word[b])))
      ++b;
    while (e > b && static_cast<unsigned char>(word[e - 1]) < 0x80 &&
           !detail::is_ascii_word_char(static_cast<unsigned char>(word[e - 1])))
      --e;
    if (b >= e) continue;
    word = detail::lowercase_utf8(word.substr(b, e - b));
    if (detail::count_codepoints(word) < 2) continue;
    tokens.push_back(std::move(word));
  }
  return tokens;
}

class StopwordList {
 public:
  StopwordList() = default;
  explicit StopwordList(std::set<std::string> terms, std::string lang = "")
      : terms_(std::move(terms)), language_(std::move(lang)) {}

  // UTF-8, one term per line, '#' comments.
  static StopwordList load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open stopwords file: " + path);
    std::set<std::string> terms;
    std::string line;
    while (std::getline(in, line)) {
      size_t hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      // trim
      size_t b = line.find_first_not_of(" \t\r");
      if (b == std::string::npos) continue;
      size_t e = line.find_last_not_of(" \t\r");
      terms.insert(detail::lowercase_utf8(line.substr(b, e - b + 1)));
    }
    return StopwordList(std::move(terms));
  }

  // A starting list for short-message English and Portuguese; callers are
  // expected to override it for their corpus.
  static StopwordList defaults() {
    static const char* words[] = {
        // English
        "the", "and", "for", "you", "that", "this", "with", "are", "was",
        "not", "but", "have", "from", "they", "his", "her", "she", "him",
        "what", "when", "who", "how", "all", "can", "out", "get", "has",
        "had", "its", "our", "your", "their", "now", "just", "too", "very",
        "will", "would", "there", "here", "about", "than", "then", "them",
        "some", "into", "like", "more", "one", "two", "rt", "lol", "omg",
        // Portuguese
        "de", "da", "do", "das", "dos", "em", "no", "na", "nos", "nas",
        "um", "uma", "uns", "umas", "os", "as", "ao", "aos", "pra", "pro",
        "que", "não", "nao", "com", "por", "para", "mas", "mais", "como",
        "se", "eu", "tu", "ele", "ela", "nós", "vos", "eles", "elas",
        "meu", "minha", "seu", "sua", "isso", "essa", "esse", "está",
        "esta", "são", "foi", "ser", "ter", "tem", "ja", "já", "hoje",
        "aqui", "vou", "vai", "kkk", "kkkk", "haha",
    };
    std::set<std::string> terms(std::begin(words), std::end(words));
    return StopwordList(std::move(terms));
  }

  bool contains(const std::string& term) const { return terms_.count(term) > 0; }
  size_t size() const { return terms_.size(); }

 private:
  std::set<std::string> terms_;
  std::string language_;
};

// Ordered (term, count), descending count, ties broken lexicographically.
using TermRanking = std::vector<std::pair<std::string, std::int64_t>>;

inline TermRanking top_terms(const std::vector<std::string>& messages,
                             const StopwordList& stopwords, size_t n) {
  std::map<std::string, std::int64_t> counts;
  for (const auto& msg : messages)
    for (auto& tok : tokenize(msg))
      if (!stopwords.contains(tok)) ++counts[tok];

  TermRanking ranking(counts.begin(), counts.end());
  std::sort(ranking.begin(), ranking.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranking.size() > n) ranking.resize(n);
  return ranking;
}

struct EventReport {
  EventWindow window;
  TermRanking terms;
  bool missing_buffers = false;
};

// Attaches the window's top terms. A window with no buffered texts yields
// empty terms and a warning flag rather than an error.
inline EventReport describe_event(const EventWindow& window,
                                  const StopwordList& stopwords,
                                  size_t top_n = 10) {
  EventReport report;
  report.window = window;
  report.terms = top_terms(window.texts, stopwords, top_n);
  report.missing_buffers = window.texts.empty();
  return report;
}

}  // namespace geopulse

#endif  // GEOPULSE_DESCRIBE_HPP
