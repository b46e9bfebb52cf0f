#include "pmuidx/query.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include "pmuidx/errors.hpp"
#include "pmuidx/ingest.hpp"

namespace pmuidx {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kDateLevels = 7;
constexpr Field kDateFields[kDateLevels] = {Field::Year,   Field::Month,  Field::Day,
                                            Field::Hour,   Field::Minute, Field::Second,
                                            Field::Decisecond};

int part_at(const TimeParts& t, int level) {
  switch (level) {
    case 0: return t.year;
    case 1: return t.month;
    case 2: return t.day;
    case 3: return t.hour;
    case 4: return t.minute;
    case 5: return t.second;
    default: return t.decisecond;
  }
}

double date_value(const TimeParts& t, Field f) {
  switch (f) {
    case Field::Year: return t.year;
    case Field::Month: return t.month;
    case Field::Day: return t.day;
    case Field::Hour: return t.hour;
    case Field::Minute: return t.minute;
    case Field::Second: return t.second;
    case Field::Decisecond: return t.decisecond;
    default: return std::numeric_limits<double>::quiet_NaN();
  }
}

bool matches_impl(const Predicate& p, const FrameRecord& frame, std::span<const double> deltas,
                  std::optional<TimeParts>& parts) {
  switch (p.kind) {
    case Predicate::Kind::And:
      for (const auto& c : p.children) {
        if (!matches_impl(c, frame, deltas, parts)) return false;
      }
      return true;
    case Predicate::Kind::Or:
      for (const auto& c : p.children) {
        if (matches_impl(c, frame, deltas, parts)) return true;
      }
      return false;
    case Predicate::Kind::Leaf:
      break;
  }
  double value = 0.0;
  if (is_date_field(p.field)) {
    if (!parts) parts = civil_time(frame.ts);
    value = date_value(*parts, p.field);
  } else {
    const auto pmu = static_cast<std::size_t>(p.pmu);
    if (pmu >= frame.samples.size()) return false;
    switch (p.field) {
      case Field::Voltage: value = frame.samples[pmu].v; break;
      case Field::Phase: value = frame.samples[pmu].phi; break;
      case Field::Delta: value = pmu < deltas.size() ? deltas[pmu] : 0.0; break;
      default: return false;
    }
  }
  return p.range.contains(value);
}

std::string number_text(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string leaf_field_text(const Predicate& p) {
  std::string s;
  if (p.pmu >= 0) s = "pmu" + std::to_string(p.pmu) + ".";
  s += field_name(p.field);
  return s;
}

void to_string_impl(const Predicate& p, std::string& out) {
  if (p.kind == Predicate::Kind::Leaf) {
    const Interval& r = p.range;
    out += leaf_field_text(p);
    if (r.lo == r.hi && r.lo_closed && r.hi_closed) {
      out += " = " + number_text(r.lo);
    } else if (r.lo == -kInf && r.hi != kInf) {
      out += (r.hi_closed ? " <= " : " < ") + number_text(r.hi);
    } else if (r.hi == kInf && r.lo != -kInf) {
      out += (r.lo_closed ? " >= " : " > ") + number_text(r.lo);
    } else {
      out += std::string(" in ") + (r.lo_closed ? "[" : "(") + number_text(r.lo) + ", " +
             number_text(r.hi) + (r.hi_closed ? "]" : ")");
    }
    return;
  }
  const bool is_and = p.kind == Predicate::Kind::And;
  if (p.children.empty()) {
    out += is_and ? "true" : "false";
    return;
  }
  for (std::size_t i = 0; i < p.children.size(); ++i) {
    if (i > 0) out += is_and ? " and " : " or ";
    const Predicate& c = p.children[i];
    const bool wrap = c.kind != Predicate::Kind::Leaf && c.children.size() > 1;
    if (wrap) out += '(';
    to_string_impl(c, out);
    if (wrap) out += ')';
  }
}

// ---------------------------------------------------------------------------
// Date decomposition

Timestamp span_start() { return compose_time(TimeParts{kFirstBinYear, 1, 1, 0, 0, 0, 0}); }
Timestamp span_end() { return compose_time(TimeParts{kLastBinYear + 1, 1, 1, 0, 0, 0, 0}); }

bool aligned(const TimeParts& t, int level) {
  for (int l = level + 1; l < kDateLevels; ++l) {
    const int floor = (l == 1 || l == 2) ? 1 : 0;
    if (part_at(t, l) != floor) return false;
  }
  return true;
}

// End of the `level` unit starting at t.
Timestamp unit_end(Timestamp t, const TimeParts& parts, int level) {
  switch (level) {
    case 0: return compose_time(TimeParts{parts.year + 1, 1, 1, 0, 0, 0, 0});
    case 1:
      return parts.month == 12 ? compose_time(TimeParts{parts.year + 1, 1, 1, 0, 0, 0, 0})
                               : compose_time(TimeParts{parts.year, parts.month + 1, 1, 0, 0, 0, 0});
    case 2: return Timestamp{t.ms + 86'400'000};
    case 3: return Timestamp{t.ms + 3'600'000};
    case 4: return Timestamp{t.ms + 60'000};
    case 5: return Timestamp{t.ms + 1'000};
    default: return Timestamp{t.ms + 100};
  }
}

Predicate simplify_one(std::vector<Predicate> v, bool is_and) {
  if (v.size() == 1) return std::move(v.front());
  return is_and ? Predicate::all_of(std::move(v)) : Predicate::any_of(std::move(v));
}

// ---------------------------------------------------------------------------
// Parser

struct Token {
  enum class Type { Ident, Value, Op, LParen, RParen, LBrack, RBrack, Comma, End };
  Type type = Type::End;
  std::string text;
  std::size_t offset = 0;
};

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  const auto is_ident = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  };
  const auto is_value = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == ':' || c == '+' ||
           c == '-';
  };
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    Token t;
    t.offset = i;
    if (c == '(' || c == ')' || c == '[' || c == ']' || c == ',') {
      t.type = c == '('   ? Token::Type::LParen
               : c == ')' ? Token::Type::RParen
               : c == '[' ? Token::Type::LBrack
               : c == ']' ? Token::Type::RBrack
                          : Token::Type::Comma;
      t.text = std::string(1, c);
      ++i;
    } else if (c == '<' || c == '>' || c == '=') {
      t.type = Token::Type::Op;
      t.text = std::string(1, c);
      ++i;
      if (i < s.size() && s[i] == '=') {
        if (c != '=') t.text += '=';
        ++i;
      }
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      t.type = Token::Type::Ident;
      while (i < s.size() && is_ident(s[i])) t.text += s[i++];
    } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.') {
      t.type = Token::Type::Value;
      while (i < s.size() && is_value(s[i])) t.text += s[i++];
    } else {
      throw ParseError("unexpected character '" + std::string(1, c) + "' at offset " +
                           std::to_string(i),
                       i);
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.offset = s.size();
  out.push_back(end);
  return out;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

struct FieldRef {
  bool is_date = false;  // the composite `date` field
  Field field = Field::Year;
  int pmu = -1;
};

// [lo, hi) of the unit a date literal names.
struct DateUnit {
  Timestamp lo;
  Timestamp hi;
};

class Parser {
 public:
  Parser(std::string_view text, const BinLayout* layout)
      : toks_(tokenize(text)), layout_(layout) {}

  Predicate parse() {
    Predicate p = expr();
    if (peek().type != Token::Type::End) fail("unexpected '" + peek().text + "'", peek());
    return p;
  }

 private:
  [[noreturn]] void fail(const std::string& what, const Token& at) const {
    throw ParseError(what + " at offset " + std::to_string(at.offset), at.offset);
  }
  const Token& peek() const { return toks_[pos_]; }
  const Token& take() { return toks_[pos_++]; }
  bool keyword(const char* kw) const {
    return peek().type == Token::Type::Ident && lower(peek().text) == kw;
  }
  const Token& expect(Token::Type type, const char* what) {
    if (peek().type != type) {
      fail(std::string("expected ") + what +
               (peek().type == Token::Type::End ? " before end of query"
                                                : ", found '" + peek().text + "'"),
           peek());
    }
    return take();
  }

  Predicate expr() {
    std::vector<Predicate> terms;
    terms.push_back(term());
    while (keyword("or")) {
      take();
      terms.push_back(term());
    }
    return simplify_one(std::move(terms), false);
  }

  Predicate term() {
    std::vector<Predicate> factors;
    factors.push_back(factor());
    while (keyword("and")) {
      take();
      factors.push_back(factor());
    }
    return simplify_one(std::move(factors), true);
  }

  Predicate factor() {
    if (peek().type == Token::Type::LParen) {
      take();
      Predicate p = expr();
      expect(Token::Type::RParen, "')'");
      return p;
    }
    if (keyword("true")) {
      take();
      return Predicate::always();
    }
    if (keyword("false")) {
      take();
      return Predicate::never();
    }
    return leaf();
  }

  FieldRef field(const Token& t) const {
    const std::string name = lower(t.text);
    FieldRef f;
    if (name == "date") {
      f.is_date = true;
      return f;
    }
    for (const Field d : kDateFields) {
      if (name == field_name(d)) {
        f.field = d;
        return f;
      }
    }
    if (name.rfind("pmu", 0) == 0) {
      const auto dot = name.find('.');
      if (dot != std::string::npos && dot > 3) {
        int id = -1;
        const auto r = std::from_chars(name.data() + 3, name.data() + dot, id);
        const std::string attr = name.substr(dot + 1);
        if (r.ec == std::errc{} && r.ptr == name.data() + dot && id >= 0) {
          f.pmu = id;
          if (attr == "v") {
            f.field = Field::Voltage;
          } else if (attr == "phi") {
            f.field = Field::Phase;
          } else if (attr == "delta") {
            f.field = Field::Delta;
          } else {
            fail("unknown PMU attribute '" + attr + "' (expected v, phi or delta)", t);
          }
          if (layout_ != nullptr && !layout_->index_of(f.field, id)) {
            fail("unknown field '" + t.text + "'", t);
          }
          return f;
        }
      }
    }
    fail("unknown field '" + t.text + "'", t);
  }

  double number(const Token& t) const {
    const std::string s = lower(t.text);
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
    double v = 0.0;
    const char* first = s.data() + (s[0] == '+' ? 1 : 0);
    const auto r = std::from_chars(first, s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size() || std::isnan(v)) {
      fail("invalid number '" + t.text + "'", t);
    }
    return v;
  }

  const Token& value_token() {
    if (peek().type == Token::Type::Value ||
        (peek().type == Token::Type::Ident && lower(peek().text) == "inf")) {
      return take();
    }
    return expect(Token::Type::Value, "a value");
  }

  DateUnit date_literal(const Token& t) const {
    std::string_view s = t.text;
    if (!s.empty() && (s.back() == 'Z' || s.back() == 'z')) s.remove_suffix(1);
    TimeParts p{0, 1, 1, 0, 0, 0, 0};
    int level = -1;
    std::size_t i = 0;
    const auto digits = [&](std::size_t n, int& out) {
      if (i + n > s.size()) return false;
      int v = 0;
      for (std::size_t k = 0; k < n; ++k) {
        const char c = s[i + k];
        if (c < '0' || c > '9') return false;
        v = v * 10 + (c - '0');
      }
      out = v;
      i += n;
      return true;
    };
    const auto sep = [&](char c) {
      if (i < s.size() && (s[i] == c || (c == 'T' && s[i] == 't'))) {
        ++i;
        return true;
      }
      return false;
    };
    bool ok = digits(4, p.year);
    if (ok) level = 0;
    if (ok && sep('-')) ok = digits(2, p.month) && (level = 1);
    if (ok && level == 1 && sep('-')) ok = digits(2, p.day) && (level = 2);
    if (ok && level == 2 && sep('T')) ok = digits(2, p.hour) && (level = 3);
    if (ok && level == 3 && sep(':')) ok = digits(2, p.minute) && (level = 4);
    if (ok && level == 4 && sep(':')) ok = digits(2, p.second) && (level = 5);
    if (ok && level == 5 && sep('.')) {
      std::size_t n = 0;
      int ms = 0;
      while (i < s.size() && n < 3 && s[i] >= '0' && s[i] <= '9') {
        ms = ms * 10 + (s[i++] - '0');
        ++n;
      }
      for (std::size_t k = n; k < 3; ++k) ms *= 10;
      if (n == 0) ok = false;
      if (ok && ms % 100 != 0) fail("date literal '" + t.text + "' is finer than 100 ms", t);
      p.decisecond = ms / 100;
      level = 6;
    }
    if (!ok || i != s.size()) {
      fail("invalid date literal '" + t.text + "' (expected YYYY[-MM[-DD[THH[:MM[:SS[.f]]]]]])",
           t);
    }
    try {
      const Timestamp lo = compose_time(p);
      return DateUnit{lo, unit_end(lo, p, level)};
    } catch (const ValidationError& e) {
      fail("invalid date literal '" + t.text + "': " + e.what(), t);
    }
  }

  Predicate leaf() {
    const Token& ft = expect(Token::Type::Ident, "a field name");
    const FieldRef f = field(ft);
    const Timestamp min_ts{std::numeric_limits<std::int64_t>::min() / 2};
    const Timestamp max_ts{std::numeric_limits<std::int64_t>::max() / 2};

    if (keyword("in")) {
      take();
      const Token& open = peek();
      if (open.type != Token::Type::LBrack && open.type != Token::Type::LParen) {
        fail("expected '[' or '(' after 'in'", open);
      }
      take();
      const bool lo_closed = open.type == Token::Type::LBrack;
      const Token& a = value_token();
      expect(Token::Type::Comma, "','");
      const Token& b = value_token();
      const Token& close = peek();
      if (close.type != Token::Type::RBrack && close.type != Token::Type::RParen) {
        fail("expected ']' or ')' to close the range", close);
      }
      take();
      const bool hi_closed = close.type == Token::Type::RBrack;
      if (f.is_date) {
        const DateUnit ua = date_literal(a);
        const DateUnit ub = date_literal(b);
        const Timestamp lo = lo_closed ? ua.lo : ua.hi;
        const Timestamp hi = hi_closed ? ub.hi : ub.lo;
        if (ua.lo > ub.lo) fail("range lower bound exceeds upper bound", a);
        return date_range(lo, hi);
      }
      const Interval r{number(a), number(b), lo_closed, hi_closed};
      if (r.lo > r.hi) fail("range lower bound exceeds upper bound", a);
      return Predicate::leaf(f.field, f.pmu, r);
    }

    const Token& op = expect(Token::Type::Op, "a comparison operator or 'in'");
    const Token& vt = value_token();
    if (f.is_date) {
      const DateUnit u = date_literal(vt);
      if (op.text == "=") return date_range(u.lo, u.hi);
      if (op.text == "<") return date_range(min_ts, u.lo);
      if (op.text == "<=") return date_range(min_ts, u.hi);
      if (op.text == ">") return date_range(u.hi, max_ts);
      return date_range(u.lo, max_ts);
    }
    const double v = number(vt);
    Interval r;
    if (op.text == "=") {
      r = Interval::point(v);
    } else if (op.text == "<") {
      r = Interval{-kInf, v, false, false};
    } else if (op.text == "<=") {
      r = Interval{-kInf, v, false, true};
    } else if (op.text == ">") {
      r = Interval{v, kInf, false, false};
    } else {
      r = Interval{v, kInf, true, false};
    }
    return Predicate::leaf(f.field, f.pmu, r);
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  const BinLayout* layout_;
};

std::optional<BinExpr> plan_impl(const Predicate& p, const BinLayout& layout) {
  switch (p.kind) {
    case Predicate::Kind::Leaf: {
      const auto idx = layout.index_of(p.field, p.pmu);
      if (!idx) {
        throw ValidationError("the bin layout has no attribute " + leaf_field_text(p));
      }
      if (p.range.empty()) return std::nullopt;
      for (const Interval& d : layout.at(*idx).domain()) {
        if (d.intersects(p.range)) return BinExpr::leaf(*idx, p.range);
      }
      return std::nullopt;
    }
    case Predicate::Kind::And: {
      std::vector<BinExpr> parts;
      for (const auto& c : p.children) {
        auto e = plan_impl(c, layout);
        if (!e) return std::nullopt;
        parts.push_back(std::move(*e));
      }
      if (parts.empty()) {
        // Every row has a year bin, so the whole year attribute is "true".
        const auto year = layout.index_of(Field::Year);
        if (!year) throw ValidationError("the bin layout has no year attribute");
        return BinExpr::leaf(*year, Interval{-kInf, kInf, false, false});
      }
      if (parts.size() == 1) return std::move(parts.front());
      return BinExpr::all_of(std::move(parts));
    }
    case Predicate::Kind::Or: {
      std::vector<BinExpr> parts;
      for (const auto& c : p.children) {
        if (auto e = plan_impl(c, layout)) parts.push_back(std::move(*e));
      }
      if (parts.empty()) return std::nullopt;
      if (parts.size() == 1) return std::move(parts.front());
      return BinExpr::any_of(std::move(parts));
    }
  }
  return std::nullopt;
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

// ---------------------------------------------------------------------------

Predicate Predicate::leaf(Field field, int pmu, Interval range) {
  Predicate p;
  p.field = field;
  p.pmu = is_date_field(field) ? -1 : pmu;
  p.range = range;
  return p;
}

Predicate Predicate::all_of(std::vector<Predicate> children) {
  Predicate p;
  p.kind = Kind::And;
  p.children = std::move(children);
  return p;
}

Predicate Predicate::any_of(std::vector<Predicate> children) {
  Predicate p;
  p.kind = Kind::Or;
  p.children = std::move(children);
  return p;
}

bool Predicate::matches(const FrameRecord& frame, std::span<const double> deltas) const {
  std::optional<TimeParts> parts;
  return matches_impl(*this, frame, deltas, parts);
}

bool Predicate::uses_delta() const {
  if (kind == Kind::Leaf) return field == Field::Delta;
  return std::any_of(children.begin(), children.end(),
                     [](const Predicate& c) { return c.uses_delta(); });
}

std::string to_string(const Predicate& p) {
  std::string out;
  to_string_impl(p, out);
  return out;
}

Predicate parse_query(std::string_view text, const BinLayout* layout) {
  return Parser(text, layout).parse();
}

Predicate date_range(Timestamp lo, Timestamp hi) {
  lo = std::max(lo, span_start());
  hi = std::min(hi, span_end());
  if (lo >= hi) return Predicate::never();
  if (lo.ms % 100 != 0 || hi.ms % 100 != 0) {
    throw ValidationError("date range bounds must be multiples of 100 ms");
  }

  // Greedy cover by the coarsest aligned units, then consecutive units of
  // one level under one parent merge into a single range leaf.
  struct Block {
    TimeParts parts;
    int level;
  };
  std::vector<Block> blocks;
  for (Timestamp t = lo; t < hi;) {
    const TimeParts parts = civil_time(t);
    for (int level = 0; level < kDateLevels; ++level) {
      if (!aligned(parts, level)) continue;
      const Timestamp end = unit_end(t, parts, level);
      if (end > hi) continue;
      blocks.push_back(Block{parts, level});
      t = end;
      break;
    }
  }

  std::vector<Predicate> groups;
  for (std::size_t i = 0; i < blocks.size();) {
    const Block& b = blocks[i];
    std::size_t j = i + 1;
    while (j < blocks.size() && blocks[j].level == b.level) {
      bool same_parent = true;
      for (int l = 0; l < b.level && same_parent; ++l) {
        same_parent = part_at(blocks[j].parts, l) == part_at(b.parts, l);
      }
      if (!same_parent) break;
      ++j;
    }
    std::vector<Predicate> leaves;
    for (int l = 0; l < b.level; ++l) {
      leaves.push_back(Predicate::leaf(kDateFields[l], -1, Interval::point(part_at(b.parts, l))));
    }
    const int first = part_at(b.parts, b.level);
    const int last = part_at(blocks[j - 1].parts, b.level);
    leaves.push_back(Predicate::leaf(
        kDateFields[b.level], -1,
        first == last ? Interval::point(first) : Interval::closed(first, last)));
    groups.push_back(simplify_one(std::move(leaves), true));
    i = j;
  }
  return simplify_one(std::move(groups), false);
}

std::optional<BinExpr> plan(const Predicate& p, const BinLayout& layout) {
  return plan_impl(p, layout);
}

std::string_view query_path_name(QueryPath p) {
  return p == QueryPath::Bitmap ? "bitmap" : "linear";
}

QueryResult execute_bitmap(const Archive& archive, const Predicate& p, QueryOptions opts) {
  const auto t0 = std::chrono::steady_clock::now();
  QueryResult res;
  res.report.predicate = to_string(p);
  res.report.path = QueryPath::Bitmap;

  const auto expr = plan(p, archive.index().layout());
  if (expr) {
    const ResultBitVector rbv = archive.index().evaluate(*expr);
    res.report.candidates = rbv.hits;
    res.report.bins_touched = rbv.bins_touched;
    if (rbv.hits > 0) {
      const bool check = !rbv.exact;
      res.report.candidacy_checked = check;
      ReadStats stats;
      auto rows = archive.fetch(rbv.bits, check && p.uses_delta(), &stats);
      res.report.bytes_read = stats.bytes_read;
      res.report.file_opens = stats.file_opens;
      for (auto& r : rows) {
        if (check && !p.matches(r.frame, r.deltas)) continue;
        ++res.report.returned;
        if (!opts.limit || res.rows.size() < *opts.limit) {
          r.deltas.clear();
          res.rows.push_back(std::move(r));
        }
      }
    }
  }
  res.report.wall_ms = elapsed_ms(t0);
  return res;
}

QueryResult execute_linear(const Archive& archive, const Predicate& p, QueryOptions opts) {
  const auto t0 = std::chrono::steady_clock::now();
  QueryResult res;
  res.report.predicate = to_string(p);
  res.report.path = QueryPath::Linear;
  res.report.candidacy_checked = true;
  ReadStats stats;
  archive.scan(
      [&](std::uint64_t row, const FrameRecord& f, std::span<const double> deltas) {
        ++res.report.candidates;
        if (!p.matches(f, deltas)) return;
        ++res.report.returned;
        if (!opts.limit || res.rows.size() < *opts.limit) {
          res.rows.push_back(ArchivedRow{row, f, {}});
        }
      },
      &stats);
  res.report.bytes_read = stats.bytes_read;
  res.report.file_opens = stats.file_opens;
  res.report.wall_ms = elapsed_ms(t0);
  return res;
}

// ---------------------------------------------------------------------------

std::vector<BenchQuery> table2_suite() {
  return {
      {"1", "pmu1.v = 533"},
      {"2", "date = 2013-06-24T21:05"},
      {"3", "date = 2013-06-24T21:06"},
      {"4", "date = 2013-06-24T21:07"},
      {"5", "date = 2013-06-24T21:06 and pmu1.v = 533"},
      {"6", "year = 2012"},
  };
}

std::vector<BenchRow> bench(const Archive& archive, std::span<const BenchQuery> queries,
                            const BenchOptions& opts) {
  if (opts.repetitions == 0) throw ValidationError("bench needs at least one repetition");
  std::vector<BenchRow> out;
  for (const BenchQuery& q : queries) {
    const Predicate p = parse_query(q.text, &archive.index().layout());
    std::uint64_t records[2] = {0, 0};
    double med[2] = {0.0, 0.0};
    for (int path = 0; path < 2; ++path) {
      std::vector<double> times;
      for (std::size_t rep = 0; rep < opts.repetitions; ++rep) {
        if (opts.cold_cache) archive.drop_page_cache();
        const QueryOptions qo{std::size_t{0}};
        const QueryResult r =
            path == 0 ? execute_bitmap(archive, p, qo) : execute_linear(archive, p, qo);
        times.push_back(r.report.wall_ms);
        records[path] = r.report.returned;
      }
      med[path] = median(std::move(times));
    }
    if (records[0] != records[1]) {
      throw StateError("query " + q.id + ": bitmap path returned " + std::to_string(records[0]) +
                       " rows, linear scan " + std::to_string(records[1]));
    }
    out.push_back(BenchRow{q.id, QueryPath::Bitmap, med[0], records[0],
                           med[0] > 0 ? med[1] / med[0] : kInf});
    out.push_back(BenchRow{q.id, QueryPath::Linear, med[1], records[1], 1.0});
  }
  return out;
}

void write_bench_csv(std::ostream& out, std::span<const BenchRow> rows) {
  out << "query_id,path,median_ms,records,speedup\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.3f,%llu,%.1f\n", r.query_id.c_str(),
                  std::string(query_path_name(r.path)).c_str(), r.median_ms,
                  static_cast<unsigned long long>(r.records), r.speedup);
    out << buf;
  }
}

Timestamp table2_start() { return compose_time(TimeParts{2013, 6, 24, 12, 0, 0, 0}); }

Archive build_table2_archive(const std::filesystem::path& dir, const EngineConfig& config,
                             std::uint64_t rows, std::uint64_t seed,
                             const std::function<void(std::uint64_t)>& progress) {
  if (config.pmu_count < 2) throw ValidationError("the table2 suite needs at least two PMUs");
  Archive archive = Archive::create(dir, config);
  StreamGenerator gen(config, table2_start(), rows, {}, seed);

  constexpr std::uint64_t kAfternoon = 150 * 60 * 60;  // 14:30 at 60 Hz
  const std::uint64_t planted =
      rows >= kAfternoon + kTable2PlantedRows + 40 ? kAfternoon : rows / 4;
  const std::size_t chunk = std::max<std::size_t>(config.segment_rows, 1024);

  std::vector<FrameRecord> buf;
  buf.reserve(chunk);
  std::uint64_t k = 0;
  while (auto f = gen.next()) {
    if (k >= planted && k < planted + kTable2PlantedRows) {
      f->samples[1].v = 533.0;
    } else if (k >= planted + kTable2PlantedRows && k < planted + kTable2PlantedRows + 40) {
      f->samples[1].v = 533.0 + static_cast<double>(k - planted - kTable2PlantedRows + 1) / 64.0;
    }
    buf.push_back(std::move(*f));
    ++k;
    if (buf.size() == chunk) {
      archive.append_frames(buf);
      buf.clear();
      if (progress) progress(k);
    }
  }
  if (!buf.empty()) archive.append_frames(buf);
  if (progress) progress(k);
  archive.sync();
  return archive;
}

}  // namespace pmuidx
