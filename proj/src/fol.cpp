#include "ltn/fol.hpp"

#include <cctype>
#include <charconv>
#include <map>
#include <sstream>

namespace ltn::fol {

FormulaPtr atom(PredicateSymbol pred, std::vector<Term> args) {
  return std::make_shared<const Formula>(Formula{Atom{std::move(pred), std::move(args)}});
}
FormulaPtr negate(FormulaPtr f) { return std::make_shared<const Formula>(Formula{Not{std::move(f)}}); }
FormulaPtr conj(FormulaPtr a, FormulaPtr b) {
  return std::make_shared<const Formula>(Formula{And{std::move(a), std::move(b)}});
}
FormulaPtr disj(FormulaPtr a, FormulaPtr b) {
  return std::make_shared<const Formula>(Formula{Or{std::move(a), std::move(b)}});
}
FormulaPtr implies(FormulaPtr a, FormulaPtr b) {
  return std::make_shared<const Formula>(Formula{Implies{std::move(a), std::move(b)}});
}
FormulaPtr forall(std::vector<std::string> vars, FormulaPtr body) {
  return std::make_shared<const Formula>(Formula{ForAll{std::move(vars), std::move(body)}});
}

FormulaPtr disj_all(const std::vector<FormulaPtr>& fs) {
  if (fs.empty()) throw std::invalid_argument("disjunction of zero formulas");
  FormulaPtr acc = fs.front();
  for (std::size_t i = 1; i < fs.size(); ++i) acc = disj(acc, fs[i]);
  return acc;
}

FormulaPtr conj_all(const std::vector<FormulaPtr>& fs) {
  if (fs.empty()) throw std::invalid_argument("conjunction of zero formulas");
  FormulaPtr acc = fs.front();
  for (std::size_t i = 1; i < fs.size(); ++i) acc = conj(acc, fs[i]);
  return acc;
}

bool equal(const Formula& a, const Formula& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(b.node);
        if constexpr (std::is_same_v<T, Atom>) {
          return x.pred == y.pred && x.args == y.args;
        } else if constexpr (std::is_same_v<T, Not>) {
          return equal(*x.operand, *y.operand);
        } else if constexpr (std::is_same_v<T, ForAll>) {
          return x.vars == y.vars && equal(*x.body, *y.body);
        } else {
          return equal(*x.lhs, *y.lhs) && equal(*x.rhs, *y.rhs);
        }
      },
      a.node);
}

const PredicateSymbol* KnowledgeBase::find(std::string_view name) const {
  for (const auto& p : predicates)
    if (p.name == name) return &p;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Printing

namespace {

int precedence(const Formula& f) {
  return std::visit(
      [](const auto& x) -> int {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ForAll>) return 0;
        if constexpr (std::is_same_v<T, Implies>) return 1;
        if constexpr (std::is_same_v<T, Or>) return 2;
        if constexpr (std::is_same_v<T, And>) return 3;
        if constexpr (std::is_same_v<T, Not>) return 4;
        return 5;
      },
      f.node);
}

void print(std::ostream& os, const Formula& f, int min_prec) {
  const bool wrap = precedence(f) < min_prec;
  if (wrap) os << '(';
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Atom>) {
          os << x.pred.name << '(';
          for (std::size_t i = 0; i < x.args.size(); ++i) os << (i ? "," : "") << to_string(x.args[i]);
          os << ')';
        } else if constexpr (std::is_same_v<T, Not>) {
          os << '~';
          print(os, *x.operand, 4);
        } else if constexpr (std::is_same_v<T, And>) {
          print(os, *x.lhs, 3);
          os << " & ";
          print(os, *x.rhs, 4);
        } else if constexpr (std::is_same_v<T, Or>) {
          print(os, *x.lhs, 2);
          os << " | ";
          print(os, *x.rhs, 3);
        } else if constexpr (std::is_same_v<T, Implies>) {
          print(os, *x.lhs, 2);
          os << " -> ";
          print(os, *x.rhs, 1);
        } else {
          os << "forall ";
          for (std::size_t i = 0; i < x.vars.size(); ++i) os << (i ? "," : "") << x.vars[i];
          os << ": ";
          print(os, *x.body, 0);
        }
      },
      f.node);
  if (wrap) os << ')';
}

}  // namespace

std::string to_string(const Term& t) {
  return std::visit([](const auto& x) -> std::string {
    if constexpr (std::is_same_v<std::decay_t<decltype(x)>, Variable>)
      return x.name;
    else
      return x.id;
  }, t);
}

std::string to_string(const Formula& f) {
  std::ostringstream os;
  print(os, f, 0);
  return os.str();
}

std::string to_string(const KnowledgeBase& kb) {
  std::ostringstream os;
  for (const auto& p : kb.predicates) os << "pred " << p.name << '/' << p.arity << '\n';
  for (const auto& a : kb.axioms) {
    os << "axiom ";
    if (!a.label.empty()) os << a.label << ": ";
    os << to_string(*a.formula) << '\n';
  }
  return os.str();
}

std::string axiom_name(const Axiom& a) { return a.label.empty() ? to_string(*a.formula) : a.label; }

// ---------------------------------------------------------------------------
// Free variables

namespace {

void collect_free(const Formula& f, std::set<std::string>& bound, std::set<std::string>& out) {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Atom>) {
          for (const auto& t : x.args)
            if (const auto* v = std::get_if<Variable>(&t); v && !bound.contains(v->name)) out.insert(v->name);
        } else if constexpr (std::is_same_v<T, Not>) {
          collect_free(*x.operand, bound, out);
        } else if constexpr (std::is_same_v<T, ForAll>) {
          std::vector<std::string> added;
          for (const auto& v : x.vars)
            if (bound.insert(v).second) added.push_back(v);
          collect_free(*x.body, bound, out);
          for (const auto& v : added) bound.erase(v);
        } else {
          collect_free(*x.lhs, bound, out);
          collect_free(*x.rhs, bound, out);
        }
      },
      f.node);
}

}  // namespace

std::set<std::string> free_variables(const Formula& f) {
  std::set<std::string> bound, out;
  collect_free(f, bound, out);
  return out;
}

// ---------------------------------------------------------------------------
// Lexer / parser

ParseError::ParseError(const std::string& msg, int line, int column)
    : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + msg),
      line_(line),
      column_(column) {}

namespace {

enum class Tok { Ident, Int, LParen, RParen, Comma, Colon, Slash, Not, And, Or, Arrow, End };

struct Token {
  Tok kind;
  std::string text;
  int line;
  int col;
};

bool is_ident_start(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  int line = 1, col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++i;
    }
  };
  while (i < src.size()) {
    const char c = src[i];
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    const int l = line, cc = col;
    if (c == '-' && i + 1 < src.size() && src[i + 1] == '>') {
      out.push_back({Tok::Arrow, "->", l, cc});
      advance(2);
      continue;
    }
    Tok single = Tok::End;
    switch (c) {
      case '(': single = Tok::LParen; break;
      case ')': single = Tok::RParen; break;
      case ',': single = Tok::Comma; break;
      case ':': single = Tok::Colon; break;
      case '/': single = Tok::Slash; break;
      case '~': single = Tok::Not; break;
      case '&': single = Tok::And; break;
      case '|': single = Tok::Or; break;
      default: break;
    }
    if (single != Tok::End) {
      out.push_back({single, std::string(1, c), l, cc});
      advance(1);
      continue;
    }
    if (is_ident_start(c)) {
      std::size_t j = i;
      while (j < src.size() && is_ident_start(src[j])) ++j;
      std::string text(src.substr(i, j - i));
      bool digits = true;
      for (char d : text) digits = digits && std::isdigit(static_cast<unsigned char>(d));
      out.push_back({digits ? Tok::Int : Tok::Ident, text, l, cc});
      advance(j - i);
      continue;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", l, cc);
  }
  out.push_back({Tok::End, "", line, col});
  return out;
}

bool is_keyword(const std::string& s) { return s == "pred" || s == "axiom" || s == "forall"; }

bool is_variable_name(const std::string& s) { return !s.empty() && std::islower(static_cast<unsigned char>(s[0])); }

class Parser {
 public:
  Parser(std::vector<Token> toks, const std::map<std::string, PredicateSymbol>& preds)
      : toks_(std::move(toks)), preds_(preds) {}

  const Token& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
  const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  bool at(Tok t) const { return peek().kind == t; }
  bool at_word(const char* w) const { return peek().kind == Tok::Ident && peek().text == w; }

  [[noreturn]] void fail(const std::string& msg, const Token& t) const { throw ParseError(msg, t.line, t.col); }

  const Token& expect(Tok t, const char* what) {
    if (!at(t)) fail(std::string("expected ") + what + (peek().kind == Tok::End ? " at end of input" : ", got '" + peek().text + "'"), peek());
    return next();
  }

  FormulaPtr formula() {
    if (at_word("forall")) {
      next();
      std::vector<std::string> vars;
      do {
        const Token& v = expect(Tok::Ident, "variable name");
        if (is_keyword(v.text) || !is_variable_name(v.text))
          fail("quantified variable '" + v.text + "' must be a lowercase identifier", v);
        for (const auto& existing : vars)
          if (existing == v.text) fail("variable '" + v.text + "' bound twice", v);
        vars.push_back(v.text);
      } while (at(Tok::Comma) && (next(), true));
      expect(Tok::Colon, "':' after quantified variables");
      return forall(std::move(vars), formula());
    }
    return implication();
  }

  FormulaPtr implication() {
    FormulaPtr lhs = disjunction();
    if (at(Tok::Arrow)) {
      next();
      return implies(lhs, at_word("forall") ? formula() : implication());
    }
    return lhs;
  }

  FormulaPtr disjunction() {
    FormulaPtr acc = conjunction();
    while (at(Tok::Or)) {
      next();
      acc = disj(acc, conjunction());
    }
    return acc;
  }

  FormulaPtr conjunction() {
    FormulaPtr acc = unary();
    while (at(Tok::And)) {
      next();
      acc = conj(acc, unary());
    }
    return acc;
  }

  FormulaPtr unary() {
    if (at(Tok::Not)) {
      next();
      return negate(unary());
    }
    if (at(Tok::LParen)) {
      next();
      FormulaPtr f = formula();
      expect(Tok::RParen, "')'");
      return f;
    }
    return atom_formula();
  }

  FormulaPtr atom_formula() {
    const Token& name = expect(Tok::Ident, "predicate or '('");
    if (is_keyword(name.text)) fail("unexpected keyword '" + name.text + "'", name);
    auto it = preds_.find(name.text);
    if (it == preds_.end()) fail("undeclared predicate '" + name.text + "'", name);
    expect(Tok::LParen, "'(' after predicate name");
    std::vector<Term> args;
    do {
      const Token& t = next();
      if (t.kind != Tok::Ident && t.kind != Tok::Int) fail("expected term", t);
      if (is_keyword(t.text)) fail("unexpected keyword '" + t.text + "'", t);
      if (is_variable_name(t.text))
        args.push_back(Variable{t.text});
      else
        args.push_back(Constant{t.text});
    } while (at(Tok::Comma) && (next(), true));
    expect(Tok::RParen, "')' after arguments");
    if (static_cast<int>(args.size()) != it->second.arity)
      fail("arity mismatch: '" + name.text + "' declared with arity " + std::to_string(it->second.arity) +
               ", applied to " + std::to_string(args.size()) + " argument(s)",
           name);
    return atom(it->second, std::move(args));
  }

  std::size_t pos_ = 0;
  std::vector<Token> toks_;
  const std::map<std::string, PredicateSymbol>& preds_;
};

// Collects `pred Name/k` declarations so axioms may precede them in the file.
std::vector<PredicateSymbol> scan_declarations(const std::vector<Token>& toks) {
  std::vector<PredicateSymbol> out;
  std::map<std::string, bool> seen;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i].kind != Tok::Ident || toks[i].text != "pred") continue;
    auto at = [&](std::size_t k) -> const Token& { return toks[std::min(i + k, toks.size() - 1)]; };
    if (at(1).kind != Tok::Ident || is_keyword(at(1).text)) throw ParseError("expected predicate name after 'pred'", at(1).line, at(1).col);
    if (at(2).kind != Tok::Slash) throw ParseError("expected '/' and arity after predicate name", at(2).line, at(2).col);
    if (at(3).kind != Tok::Int) throw ParseError("expected integer arity", at(3).line, at(3).col);
    int arity = 0;
    const auto& s = at(3).text;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), arity);
    if (ec != std::errc() || arity < 1) throw ParseError("arity must be a positive integer", at(3).line, at(3).col);
    if (seen[at(1).text]) throw ParseError("duplicate symbol '" + at(1).text + "'", at(1).line, at(1).col);
    seen[at(1).text] = true;
    out.push_back({at(1).text, arity});
    i += 3;
  }
  return out;
}

}  // namespace

KnowledgeBase parse_axioms(std::string_view text) {
  auto toks = lex(text);
  KnowledgeBase kb;
  kb.predicates = scan_declarations(toks);
  std::map<std::string, PredicateSymbol> table;
  for (const auto& p : kb.predicates) table[p.name] = p;

  Parser p(std::move(toks), table);
  while (!p.at(Tok::End)) {
    if (p.at_word("pred")) {
      for (int k = 0; k < 4; ++k) p.next();  // validated by scan_declarations
      continue;
    }
    if (!p.at_word("axiom")) p.fail("expected 'pred' or 'axiom', got '" + p.peek().text + "'", p.peek());
    const Token start = p.next();
    Axiom ax;
    if (p.peek().kind == Tok::Ident && !is_keyword(p.peek().text) && p.peek(1).kind == Tok::Colon) {
      ax.label = p.next().text;
      p.next();
    }
    ax.formula = p.formula();
    if (!p.at(Tok::End) && !p.at_word("pred") && !p.at_word("axiom"))
      p.fail("unexpected '" + p.peek().text + "' after axiom", p.peek());
    auto fv = free_variables(*ax.formula);
    if (!fv.empty()) p.fail("free variable " + *fv.begin() + " in axiom", start);
    kb.axioms.push_back(std::move(ax));
  }
  return kb;
}

FormulaPtr parse_formula(std::string_view text, const std::vector<PredicateSymbol>& predicates) {
  std::map<std::string, PredicateSymbol> table;
  for (const auto& p : predicates) table[p.name] = p;
  Parser p(lex(text), table);
  FormulaPtr f = p.formula();
  if (!p.at(Tok::End)) p.fail("unexpected '" + p.peek().text + "' after formula", p.peek());
  return f;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

void check_formula(const Formula& f, const KnowledgeBase& kb, const std::string& where, std::vector<Diagnostic>& out) {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Atom>) {
          const auto* decl = kb.find(x.pred.name);
          if (decl == nullptr) {
            out.push_back({"undeclared predicate", where + ": predicate '" + x.pred.name + "' is not declared"});
          } else if (static_cast<int>(x.args.size()) != decl->arity || x.pred.arity != decl->arity) {
            out.push_back({"arity mismatch", where + ": '" + x.pred.name + "' declared with arity " +
                                                 std::to_string(decl->arity) + ", applied to " +
                                                 std::to_string(x.args.size())});
          }
          for (const auto& t : x.args)
            if (std::holds_alternative<Variable>(t) && !is_variable_name(std::get<Variable>(t).name))
              out.push_back({"bad variable name", where + ": variable '" + std::get<Variable>(t).name +
                                                      "' must start with a lowercase letter"});
        } else if constexpr (std::is_same_v<T, Not>) {
          check_formula(*x.operand, kb, where, out);
        } else if constexpr (std::is_same_v<T, ForAll>) {
          if (x.vars.empty()) out.push_back({"empty quantifier", where + ": forall binds no variables"});
          check_formula(*x.body, kb, where, out);
        } else {
          check_formula(*x.lhs, kb, where, out);
          check_formula(*x.rhs, kb, where, out);
        }
      },
      f.node);
}

}  // namespace

std::vector<Diagnostic> validate(const KnowledgeBase& kb) {
  std::vector<Diagnostic> out;
  std::set<std::string> names;
  for (const auto& p : kb.predicates) {
    if (!names.insert(p.name).second) out.push_back({"duplicate symbol", "predicate '" + p.name + "' declared twice"});
    if (p.arity < 1) out.push_back({"bad arity", "predicate '" + p.name + "' has arity < 1"});
    if (p.name.empty() || is_keyword(p.name)) out.push_back({"bad name", "invalid predicate name '" + p.name + "'"});
  }
  for (std::size_t i = 0; i < kb.axioms.size(); ++i) {
    const auto& ax = kb.axioms[i];
    const std::string where = "axiom " + std::to_string(i + 1);
    if (!ax.formula) {
      out.push_back({"empty axiom", where + " has no formula"});
      continue;
    }
    check_formula(*ax.formula, kb, where, out);
    for (const auto& v : free_variables(*ax.formula))
      out.push_back({"free variable", where + ": free variable '" + v + "'"});
  }
  return out;
}

}  // namespace ltn::fol
