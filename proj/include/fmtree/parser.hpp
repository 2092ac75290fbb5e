#pragma once
// Textual DSL for fault maintenance trees. Line-oriented, one declaration per
// ';'-terminated statement, '//' comments. parse and serialize round-trip.
//
//   toplevel te;
//   te or coil fan;
//   coil ebe levels=4 tdeg=20y tclean=1d treplace=7d;
//   dep rdep coil deps=fan gamma=2;
//   policy trep=182d toh=20y tinsp=7d stages=3;
//   costs repair=100 replace=5000 opday=0 failday=0;
//
// Durations take a unit suffix d/m/y (m = 30.42 d, y = 365 d; default d);
// 'off' disables a policy timer.

#include <cctype>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "fmtree/base.hpp"
#include "fmtree/model.hpp"

namespace fmtree {

inline constexpr double kDaysPerMonth = 30.42;
inline constexpr double kDaysPerYear = 365.0;

namespace detail {

struct Token {
  enum Kind { kId, kNumber, kSymbol, kEnd } kind = kEnd;
  std::string text;
  double value = 0.0;
  char unit = 0;  // 0 none, else d/m/y
  int line = 1, col = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) { advance(); }

  const Token& peek() const { return cur_; }

  Token take() {
    Token t = cur_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '\n') { ++line_; col_ = 1; ++pos_; continue; }
      if (c == ' ' || c == '\t' || c == '\r') { ++col_; ++pos_; continue; }
      if (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '/') {
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
        continue;
      }
      break;
    }
    cur_ = Token{};
    cur_.line = line_;
    cur_.col = col_;
    if (pos_ >= src_.size()) return;

    char c = src_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        eat();
      cur_.kind = Token::kId;
      cur_.text = std::string(src_.substr(start, pos_ - start));
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' ||
        ((c == '-' || c == '+') && pos_ + 1 < src_.size() &&
         std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      size_t start = pos_;
      eat();
      while (pos_ < src_.size()) {
        char d = src_[pos_];
        bool exp_sign = (d == '+' || d == '-') && (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E');
        bool exp_e = (d == 'e' || d == 'E') && pos_ + 1 < src_.size() &&
                     (std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])) ||
                      src_[pos_ + 1] == '+' || src_[pos_ + 1] == '-');
        if (std::isdigit(static_cast<unsigned char>(d)) || d == '.' || exp_sign || exp_e)
          eat();
        else
          break;
      }
      cur_.kind = Token::kNumber;
      cur_.text = std::string(src_.substr(start, pos_ - start));
      const char* first = cur_.text.data();
      const char* last = first + cur_.text.size();
      auto r = std::from_chars(first, last, cur_.value);
      if (r.ec != std::errc{} || r.ptr != last)
        throw parse_error("malformed number '" + cur_.text + "'", cur_.line, cur_.col);
      // unit suffix glued to the number: 20y, 182d, 30.42m
      if (pos_ < src_.size() && (src_[pos_] == 'd' || src_[pos_] == 'm' || src_[pos_] == 'y')) {
        bool bare = pos_ + 1 >= src_.size() ||
                    (!std::isalnum(static_cast<unsigned char>(src_[pos_ + 1])) &&
                     src_[pos_ + 1] != '_');
        if (!bare)
          throw parse_error("bad unit suffix on '" + cur_.text + "'", cur_.line, cur_.col);
        cur_.unit = src_[pos_];
        eat();
      } else if (pos_ < src_.size() &&
                 (std::isalpha(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
        throw parse_error("bad unit suffix on '" + cur_.text + "'", cur_.line, cur_.col);
      }
      return;
    }
    if (c == ';' || c == '=' || c == ',') {
      cur_.kind = Token::kSymbol;
      cur_.text = std::string(1, c);
      eat();
      return;
    }
    throw parse_error(std::string("unexpected character '") + c + "'", line_, col_);
  }

  void eat() { ++pos_; ++col_; }

  std::string_view src_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  Token cur_;
};

inline double to_days(const Token& t) {
  switch (t.unit) {
    case 'm': return t.value * kDaysPerMonth;
    case 'y': return t.value * kDaysPerYear;
    default: return t.value;
  }
}

class Parser {
 public:
  explicit Parser(std::string_view src) : lex_(src) {}

  FmtModel run() {
    FmtModel m;
    bool saw_toplevel = false;
    while (lex_.peek().kind != Token::kEnd) statement(m, saw_toplevel);
    check_references(m);
    return m;
  }

 private:
  [[noreturn]] void fail(const Token& t, const std::string& msg) {
    throw parse_error(msg + (t.kind == Token::kEnd ? " at end of input"
                                                   : " at token '" + t.text + "'"),
                      t.line, t.col);
  }

  Token expect_id(const char* what) {
    Token t = lex_.take();
    if (t.kind != Token::kId) fail(t, std::string("expected ") + what);
    return t;
  }

  void expect_symbol(char c) {
    Token t = lex_.take();
    if (t.kind != Token::kSymbol || t.text[0] != c)
      fail(t, std::string("expected '") + c + "'");
  }

  bool at_symbol(char c) {
    return lex_.peek().kind == Token::kSymbol && lex_.peek().text[0] == c;
  }

  // number with optional d/m/y suffix, or 'off' for a disabled timer
  double duration_value(bool allow_off) {
    Token t = lex_.take();
    if (allow_off && t.kind == Token::kId && t.text == "off") return kInf;
    if (t.kind != Token::kNumber) fail(t, "expected a duration");
    return to_days(t);
  }

  double plain_number() {
    Token t = lex_.take();
    if (t.kind != Token::kNumber) fail(t, "expected a number");
    if (t.unit) fail(t, "unit suffix not allowed here");
    return t.value;
  }

  uint32_t positive_int(const char* what) {
    Token t = lex_.take();
    if (t.kind != Token::kNumber || t.unit || t.value < 1 ||
        t.value != std::floor(t.value) || t.value > 4e9)
      fail(t, std::string("expected a positive integer ") + what);
    return static_cast<uint32_t>(t.value);
  }

  std::vector<std::string> id_list() {
    std::vector<std::string> out;
    out.push_back(expect_id("identifier").text);
    while (at_symbol(',')) {
      lex_.take();
      out.push_back(expect_id("identifier").text);
    }
    return out;
  }

  void statement(FmtModel& m, bool& saw_toplevel) {
    Token head = expect_id("statement");
    if (head.text == "toplevel") {
      if (saw_toplevel) fail(head, "duplicate toplevel declaration");
      saw_toplevel = true;
      m.top_event = expect_id("top event identifier").text;
      expect_symbol(';');
      return;
    }
    if (head.text == "policy") { policy_statement(m); return; }
    if (head.text == "costs") { costs_statement(m); return; }
    node_statement(m, head);
  }

  void policy_statement(FmtModel& m) {
    while (!at_symbol(';')) {
      Token key = expect_id("policy key");
      expect_symbol('=');
      if (key.text == "trep") m.policy.t_rep = duration_value(true);
      else if (key.text == "toh") m.policy.t_oh = duration_value(true);
      else if (key.text == "tinsp") m.policy.t_insp = duration_value(true);
      else if (key.text == "stages") m.policy.timer_stages = positive_int("stage count");
      else fail(key, "unknown policy key");
    }
    lex_.take();
  }

  void costs_statement(FmtModel& m) {
    while (!at_symbol(';')) {
      Token key = expect_id("cost key");
      expect_symbol('=');
      if (key.text == "repair") m.costs.repair = plain_number();
      else if (key.text == "replace") m.costs.replace = plain_number();
      else if (key.text == "opday") m.costs.operational_per_day = plain_number();
      else if (key.text == "failday") m.costs.failure_per_day = plain_number();
      else fail(key, "unknown cost key");
    }
    lex_.take();
  }

  void node_statement(FmtModel& m, const Token& head) {
    Token kind = expect_id("node kind");
    try {
      if (kind.text == "or") {
        GateSpec g;
        g.id = head.text;
        g.kind = GateSpec::Kind::kOr;
        g.line = head.line;
        if (at_symbol(';')) fail(lex_.peek(), "expected input identifier");
        while (!at_symbol(';')) g.inputs.push_back(expect_id("input identifier").text);
        lex_.take();
        m.add(std::move(g));
      } else if (kind.text == "rdep") {
        GateSpec g;
        g.id = head.text;
        g.kind = GateSpec::Kind::kRdep;
        g.line = head.line;
        g.inputs.push_back(expect_id("trigger identifier").text);
        while (!at_symbol(';')) {
          Token key = expect_id("rdep key");
          expect_symbol('=');
          if (key.text == "deps") g.dependents = id_list();
          else if (key.text == "gamma") g.gamma = plain_number();
          else fail(key, "unknown rdep key");
        }
        lex_.take();
        m.add(std::move(g));
      } else if (kind.text == "ebe") {
        EbeSpec e;
        e.id = head.text;
        e.line = head.line;
        while (!at_symbol(';')) {
          Token key = expect_id("ebe key");
          expect_symbol('=');
          if (key.text == "levels") e.levels = positive_int("level count");
          else if (key.text == "tdeg") e.t_deg = duration_value(false);
          else if (key.text == "tclean") e.t_clean = duration_value(false);
          else if (key.text == "treplace") e.t_replace = duration_value(false);
          else if (key.text == "dup") e.duplicate_of = expect_id("original identifier").text;
          else if (key.text == "abstract") e.abstracted = plain_number() != 0;
          else fail(key, "unknown ebe key");
        }
        lex_.take();
        m.add(std::move(e));
      } else {
        fail(kind, "expected node kind or/rdep/ebe");
      }
    } catch (const std::invalid_argument& dup) {
      throw parse_error(dup.what(), head.line, head.col);
    }
  }

  // forward references are fine inside a document, dangling ones are not
  void check_references(const FmtModel& m) {
    auto missing = [&](const std::string& id) { return m.find(id) == nullptr; };
    if (!m.top_event.empty() && missing(m.top_event))
      throw parse_error("unknown reference '" + m.top_event + "'", 1, 1);
    for (const NodeSpec& n : m.nodes()) {
      const GateSpec* g = std::get_if<GateSpec>(&n);
      if (!g) continue;
      for (const std::string& in : g->inputs)
        if (missing(in))
          throw parse_error("unknown reference '" + in + "'", g->line, 1);
      for (const std::string& d : g->dependents)
        if (missing(d))
          throw parse_error("unknown reference '" + d + "'", g->line, 1);
    }
  }

  Lexer lex_;
};

}  // namespace detail

inline FmtModel parse(std::string_view text) { return detail::Parser(text).run(); }

inline std::string fmt_days(double days) {
  if (days == kInf) return "off";
  return fmt_double(days) + "d";
}

inline std::string serialize(const FmtModel& m) {
  std::string out;
  out += "toplevel " + m.top_event + ";\n";
  for (const NodeSpec& n : m.nodes()) {
    if (const EbeSpec* e = std::get_if<EbeSpec>(&n)) {
      out += e->id + " ebe levels=" + std::to_string(e->levels) + " tdeg=" + fmt_days(e->t_deg) +
             " tclean=" + fmt_days(e->t_clean) + " treplace=" + fmt_days(e->t_replace);
      if (!e->duplicate_of.empty()) out += " dup=" + e->duplicate_of;
      if (e->abstracted) out += " abstract=1";
      out += ";\n";
    } else {
      const GateSpec& g = std::get<GateSpec>(n);
      if (g.kind == GateSpec::Kind::kOr) {
        out += g.id + " or";
        for (const std::string& in : g.inputs) out += " " + in;
        out += ";\n";
      } else {
        out += g.id + " rdep " + (g.inputs.empty() ? "" : g.inputs[0]) + " deps=";
        for (size_t i = 0; i < g.dependents.size(); ++i)
          out += (i ? "," : "") + g.dependents[i];
        out += " gamma=" + fmt_double(g.gamma) + ";\n";
      }
    }
  }
  out += "policy trep=" + fmt_days(m.policy.t_rep) + " toh=" + fmt_days(m.policy.t_oh) +
         " tinsp=" + fmt_days(m.policy.t_insp) +
         " stages=" + std::to_string(m.policy.timer_stages) + ";\n";
  out += "costs repair=" + fmt_double(m.costs.repair) + " replace=" + fmt_double(m.costs.replace) +
         " opday=" + fmt_double(m.costs.operational_per_day) +
         " failday=" + fmt_double(m.costs.failure_per_day) + ";\n";
  return out;
}

}  // namespace fmtree
