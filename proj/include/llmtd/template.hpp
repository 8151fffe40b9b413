#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "llmtd/errors.hpp"
#include "llmtd/message.hpp"
#include "llmtd/util.hpp"

namespace llmtd {

enum class TokenKind { Literal, Wildcard };

/// Literal text is non-empty for Literal tokens and never contains "<*>".
struct Token {
  TokenKind kind = TokenKind::Literal;
  std::string text;

  static Token literal(std::string s) { return Token{TokenKind::Literal, std::move(s)}; }
  static Token wildcard() { return Token{TokenKind::Wildcard, {}}; }

  friend bool operator==(const Token&, const Token&) = default;
};

/// A line pattern in normal form: tokens strictly alternate between Literal
/// and Wildcard, so string equality of `source` is a valid identity test.
struct Template {
  std::vector<Token> tokens;
  std::string source;
  std::optional<LogMessage> representative;

  std::size_t literal_length() const {
    std::size_t n = 0;
    for (const Token& tok : tokens) n += tok.text.size();
    return n;
  }

  bool has_wildcard() const {
    for (const Token& tok : tokens) {
      if (tok.kind == TokenKind::Wildcard) return true;
    }
    return false;
  }
};

inline std::string to_string(const Template& t) {
  std::string out;
  for (const Token& tok : t.tokens) {
    if (tok.kind == TokenKind::Wildcard) {
      out += kWildcardMarker;
    } else {
      out += tok.text;
    }
  }
  return out;
}

/// Parses the canonical text form. Runs of consecutive "<*>" collapse to a
/// single Wildcard, so formatting and re-parsing is a fixed point.
inline Template parse_template(std::string_view s) {
  if (!s.empty() && s.back() == '\n') s.remove_suffix(1);
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  if (trim(s).empty()) {
    throw Error(ErrorCode::EmptyTemplate, "template string is empty");
  }

  Template t;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t marker = s.find(kWildcardMarker, pos);
    if (marker == std::string_view::npos) {
      t.tokens.push_back(Token::literal(std::string(s.substr(pos))));
      break;
    }
    if (marker > pos) {
      t.tokens.push_back(Token::literal(std::string(s.substr(pos, marker - pos))));
    }
    if (t.tokens.empty() || t.tokens.back().kind != TokenKind::Wildcard) {
      t.tokens.push_back(Token::wildcard());
    }
    pos = marker + kWildcardMarker.size();
  }
  t.source = to_string(t);
  return t;
}

/// Full-line anchored match. A wildcard consumes one or more characters of
/// any kind, including whitespace.
///
/// Literals are placed greedily left to right: taking the earliest admissible
/// occurrence of each inner literal never rules out a match, because any
/// later placement only shrinks the room left for the remaining tokens. The
/// final literal is pinned to the end of the line instead, since it must be
/// a suffix.
inline bool matches(const Template& t, std::string_view text) {
  const std::vector<Token>& toks = t.tokens;
  if (toks.empty()) return text.empty();
  std::size_t pos = 0;
  std::size_t i = 0;

  if (toks[i].kind == TokenKind::Literal) {
    if (!text.starts_with(toks[i].text)) return false;
    pos = toks[i].text.size();
    ++i;
    if (i == toks.size()) return pos == text.size();
  }

  const bool ends_with_literal = toks.back().kind == TokenKind::Literal;
  std::size_t inner_end = toks.size();
  std::size_t tail_start = text.size();
  if (ends_with_literal) {
    const std::string& lit = toks.back().text;
    if (lit.size() > text.size()) return false;
    tail_start = text.size() - lit.size();
    if (text.substr(tail_start) != lit) return false;
    inner_end = toks.size() - 1;
  }

  for (std::size_t j = i; j < inner_end; ++j) {
    if (toks[j].kind == TokenKind::Wildcard) continue;
    const std::string& lit = toks[j].text;
    // The preceding wildcard consumes at least one character.
    std::size_t found = text.find(lit, pos + 1);
    if (found == std::string_view::npos) return false;
    pos = found + lit.size();
  }

  // The trailing wildcard also needs at least one character before the
  // pinned suffix (or the end of the line).
  return pos + 1 <= tail_start;
}

/// Indices into the message list the set was computed against.
struct MatchSet {
  std::vector<std::size_t> indices;  // ascending

  bool contains(std::size_t i) const {
    for (std::size_t idx : indices) {
      if (idx == i) return true;
      if (idx > i) return false;
    }
    return false;
  }

  friend bool operator==(const MatchSet&, const MatchSet&) = default;
};

inline MatchSet match_set(const Template& t, std::span<const LogMessage> log) {
  MatchSet out;
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (matches(t, log[i].text)) out.indices.push_back(i);
  }
  return out;
}

namespace detail {

/// Character-level atoms of a template: exact characters for literals and a
/// one-or-more "any" block per wildcard.
struct Atom {
  bool any = false;
  char ch = '\0';
};

inline std::vector<Atom> template_atoms(const Template& t) {
  std::vector<Atom> atoms;
  for (const Token& tok : t.tokens) {
    if (tok.kind == TokenKind::Wildcard) {
      atoms.push_back(Atom{true, '\0'});
    } else {
      for (char c : tok.text) atoms.push_back(Atom{false, c});
    }
  }
  return atoms;
}

/// NFA over atom positions 0..n (n accepts). On one input character a
/// char-atom advances, while an "any" atom may advance or keep consuming in
/// place, which encodes "one or more characters" without epsilon moves.
struct StateSet {
  std::vector<std::uint64_t> bits;

  explicit StateSet(std::size_t states) : bits((states + 63) / 64, 0) {}
  void add(std::size_t i) { bits[i / 64] |= std::uint64_t{1} << (i % 64); }
  bool has(std::size_t i) const { return (bits[i / 64] >> (i % 64)) & 1; }
  bool empty() const {
    for (std::uint64_t w : bits) {
      if (w) return false;
    }
    return true;
  }
  friend auto operator<=>(const StateSet&, const StateSet&) = default;
};

/// Symbol -1 stands for any character that occurs in neither template's
/// literals; such characters are interchangeable for both automata, so one
/// representative suffices.
inline StateSet nfa_step(const std::vector<Atom>& atoms, const StateSet& from, int symbol) {
  StateSet next(atoms.size() + 1);
  for (std::size_t p = 0; p < atoms.size(); ++p) {
    if (!from.has(p)) continue;
    const Atom& a = atoms[p];
    if (a.any) {
      next.add(p);
      next.add(p + 1);
    } else if (symbol >= 0 && a.ch == static_cast<char>(symbol)) {
      next.add(p + 1);
    }
  }
  return next;
}

}  // namespace detail

/// If some string is matched by t1 but not by t2, returns the shortest such
/// string; returns nullopt when every t1 match is also a t2 match.
///
/// Both templates denote regular languages (literal blocks interleaved with
/// "any non-empty string" blocks), so inclusion is decided by a breadth-first
/// product walk of the two automata, determinizing each side on the fly. The
/// walk only needs one symbol per distinct literal character plus a single
/// stand-in for everything else.
inline std::optional<std::string> subset_counterexample(const Template& t1, const Template& t2) {
  const std::vector<detail::Atom> a = detail::template_atoms(t1);
  const std::vector<detail::Atom> b = detail::template_atoms(t2);

  std::vector<int> alphabet;
  char other = '\0';
  {
    std::set<char> chars;
    for (const detail::Atom& atom : a) {
      if (!atom.any) chars.insert(atom.ch);
    }
    for (const detail::Atom& atom : b) {
      if (!atom.any) chars.insert(atom.ch);
    }
    for (char c : chars) alphabet.push_back(static_cast<unsigned char>(c));
    auto is_free = [&](char c) { return !chars.contains(c); };
    for (int c = 33; c <= 126 && other == '\0'; ++c) {
      if (is_free(static_cast<char>(c))) other = static_cast<char>(c);
    }
    for (int c = 1; c <= 255 && other == '\0'; ++c) {
      if (is_free(static_cast<char>(c))) other = static_cast<char>(c);
    }
    if (other != '\0') alphabet.push_back(-1);
  }

  detail::StateSet sa(a.size() + 1);
  sa.add(0);
  detail::StateSet sb(b.size() + 1);
  sb.add(0);

  using Config = std::pair<detail::StateSet, detail::StateSet>;
  const Config start{sa, sb};
  // Maps each discovered configuration to its predecessor and the symbol
  // that reached it, for witness reconstruction.
  std::map<Config, std::pair<Config, int>> parent;
  std::vector<Config> queue{start};
  std::set<Config> seen{start};

  for (std::size_t head = 0; head < queue.size(); ++head) {
    Config cur = queue[head];
    if (cur.first.has(a.size()) && !cur.second.has(b.size())) {
      std::string witness;
      Config walk = cur;
      while (!(walk == start)) {
        const auto& [prev, symbol] = parent.at(walk);
        witness.push_back(symbol == -1 ? other : static_cast<char>(symbol));
        walk = prev;
      }
      std::reverse(witness.begin(), witness.end());
      return witness;
    }
    for (int symbol : alphabet) {
      detail::StateSet na = detail::nfa_step(a, cur.first, symbol);
      if (na.empty()) continue;  // no t1 string continues this way
      detail::StateSet nb = detail::nfa_step(b, cur.second, symbol);
      Config next{std::move(na), std::move(nb)};
      if (seen.insert(next).second) {
        parent.emplace(next, std::make_pair(cur, symbol));
        queue.push_back(std::move(next));
      }
    }
  }
  return std::nullopt;
}

/// Exact language inclusion: every string matched by t1 is matched by t2.
inline bool language_subset(const Template& t1, const Template& t2) {
  return !subset_counterexample(t1, t2).has_value();
}

inline bool strict_subset(const Template& t1, const Template& t2) {
  return language_subset(t1, t2) && !language_subset(t2, t1);
}

/// True iff t can be produced from v by replacing each of zero or more of
/// v's Wildcard tokens with a non-empty constant string. Substituting a
/// wildcard with a pattern that itself contains a wildcard does not qualify.
///
/// Decided by alignment: a kept wildcard of v must line up with a whole
/// wildcard token of t, a replaced one must consume characters inside one of
/// t's literal tokens (a constant cannot span a wildcard of t).
inline bool is_constant_specialization(const Template& t, const Template& v) {
  const std::vector<Token>& tt = t.tokens;
  const std::vector<Token>& vt = v.tokens;

  // State: (token index in t, char offset inside a t literal, token index in v).
  struct Key {
    std::size_t ti, toff, vj;
    auto operator<=>(const Key&) const = default;
  };
  std::map<Key, bool> memo;

  auto rec = [&](auto&& self, std::size_t ti, std::size_t toff, std::size_t vj) -> bool {
    Key key{ti, toff, vj};
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    bool ok = false;
    if (vj == vt.size()) {
      ok = ti == tt.size();
    } else if (vt[vj].kind == TokenKind::Literal) {
      const std::string& lit = vt[vj].text;
      if (ti < tt.size() && tt[ti].kind == TokenKind::Literal &&
          std::string_view(tt[ti].text).substr(toff).starts_with(lit)) {
        std::size_t noff = toff + lit.size();
        if (noff == tt[ti].text.size()) {
          ok = self(self, ti + 1, 0, vj + 1);
        } else {
          ok = self(self, ti, noff, vj + 1);
        }
      }
    } else {
      // Kept as a wildcard.
      if (ti < tt.size() && tt[ti].kind == TokenKind::Wildcard) {
        ok = self(self, ti + 1, 0, vj + 1);
      }
      // Replaced by a constant: consume 1..k characters of t's literal.
      if (!ok && ti < tt.size() && tt[ti].kind == TokenKind::Literal) {
        const std::size_t len = tt[ti].text.size();
        for (std::size_t k = 1; !ok && toff + k <= len; ++k) {
          std::size_t noff = toff + k;
          if (noff == len) {
            ok = self(self, ti + 1, 0, vj + 1);
          } else {
            ok = self(self, ti, noff, vj + 1);
          }
        }
      }
    }
    memo[key] = ok;
    return ok;
  };
  return rec(rec, 0, 0, 0);
}

namespace detail {

/// Splits a canonical template string into whitespace-separated words while
/// keeping the exact separators, so a word-level rewrite can be compared
/// without disturbing spacing.
struct WordSplit {
  std::vector<std::string_view> words;
  std::vector<std::string_view> seps;  // seps[i] precedes words[i]; one extra trailing sep
};

inline WordSplit split_words(std::string_view s) {
  WordSplit out;
  std::size_t pos = 0;
  while (true) {
    std::size_t ws_start = pos;
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
    std::string_view sep = s.substr(ws_start, pos - ws_start);
    if (pos == s.size()) {
      out.seps.push_back(sep);
      break;
    }
    out.seps.push_back(sep);
    std::size_t word_start = pos;
    while (pos < s.size() && s[pos] != ' ' && s[pos] != '\t') ++pos;
    out.words.push_back(s.substr(word_start, pos - word_start));
  }
  return out;
}

}  // namespace detail

/// True iff t equals v after replacing some subset of v's whitespace-separated
/// words that contain "<*>" as a proper substring (the word is not exactly
/// "<*>") each with the bare word "<*>".
inline bool is_word_atomic_generalization(const Template& t, const Template& v) {
  const detail::WordSplit wt = detail::split_words(t.source);
  const detail::WordSplit wv = detail::split_words(v.source);
  if (wt.words.size() != wv.words.size()) return false;
  if (wt.seps != wv.seps) return false;
  for (std::size_t i = 0; i < wt.words.size(); ++i) {
    if (wt.words[i] == wv.words[i]) continue;
    const bool replaceable = wv.words[i] != kWildcardMarker &&
                             wv.words[i].find(kWildcardMarker) != std::string_view::npos;
    if (wt.words[i] == kWildcardMarker && replaceable) continue;
    return false;
  }
  return true;
}

}  // namespace llmtd
