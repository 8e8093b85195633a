#pragma once

#include "soas/equational.hpp"

namespace soas {

struct ParseError : std::runtime_error {
  int line = 0, col = 0;
  ParseError(const std::string& msg, int l, int c)
      : std::runtime_error(std::to_string(l) + ":" + std::to_string(c) + ": " + msg),
        line(l),
        col(c) {}
};

// A named unification problem: exists-metavariables, forall-variables, and
// typed constraints (each constraint carries the shared forall context).
struct NamedProblem {
  std::string name;
  MetaContext metas;
  VarContext ctx;
  std::vector<Constraint> constraints;

  UnificationProblem problem() const { return UnificationProblem{metas, constraints}; }
};

struct ProblemFile {
  Presentation pres;
  std::vector<NamedProblem> problems;

  const NamedProblem* find_problem(const std::string& n) const {
    for (const auto& p : problems)
      if (p.name == n) return &p;
    return nullptr;
  }
};

namespace detail {

struct Token {
  enum class Kind {
    Ident,
    Number,
    Punct,  // text holds the punctuation: . , : ( ) [ ] < > * |- |-> == --> ->
    End,
  };
  Kind kind = Kind::End;
  std::string text;
  int line = 1, col = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) { advance(); }

  const Token& peek() const { return tok_; }
  Token next() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    skip_ws();
    tok_.line = line_;
    tok_.col = col_;
    if (pos_ >= src_.size()) {
      tok_.kind = Token::Kind::End;
      tok_.text = "<end of input>";
      return;
    }
    char c = src_[pos_];
    if (isalpha((unsigned char)c) || c == '_') {
      size_t s = pos_;
      while (pos_ < src_.size() &&
             (isalnum((unsigned char)src_[pos_]) || src_[pos_] == '_' || src_[pos_] == '\''))
        bump();
      tok_.kind = Token::Kind::Ident;
      tok_.text = src_.substr(s, pos_ - s);
      return;
    }
    if (isdigit((unsigned char)c)) {
      size_t s = pos_;
      while (pos_ < src_.size() && isdigit((unsigned char)src_[pos_])) bump();
      tok_.kind = Token::Kind::Number;
      tok_.text = src_.substr(s, pos_ - s);
      return;
    }
    tok_.kind = Token::Kind::Punct;
    if (pos_ + 2 < src_.size() && src_.compare(pos_, 3, "-->") == 0) {
      tok_.text = "-->";
      bump();
      bump();
      bump();
      return;
    }
    auto two = [&](const char* p) {
      return pos_ + 1 < src_.size() && src_[pos_] == p[0] && src_[pos_ + 1] == p[1];
    };
    if (two("|-") && pos_ + 2 < src_.size() && src_[pos_ + 2] == '>') {
      tok_.text = "|->";
      bump();
      bump();
      bump();
      return;
    }
    if (two("|-")) {
      tok_.text = "|-";
      bump();
      bump();
      return;
    }
    if (two("==")) {
      tok_.text = "==";
      bump();
      bump();
      return;
    }
    if (two("->")) {
      tok_.text = "->";
      bump();
      bump();
      return;
    }
    if (two("/\\")) {
      tok_.text = "/\\";
      bump();
      bump();
      return;
    }
    tok_.text = std::string(1, c);
    bump();
  }

  void skip_ws() {
    for (;;) {
      while (pos_ < src_.size() && isspace((unsigned char)src_[pos_])) bump();
      // `--` starts a comment, except for the oriented-axiom arrow `-->`.
      if (pos_ + 1 < src_.size() && src_[pos_] == '-' && src_[pos_ + 1] == '-') {
        if (pos_ + 2 < src_.size() && src_[pos_ + 2] == '>') return;  // `-->` token
        while (pos_ < src_.size() && src_[pos_] != '\n') bump();
        continue;
      }
      return;
    }
  }

  void bump() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  const std::string& src_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  Token tok_;
};

class Parser {
 public:
  explicit Parser(const std::string& src) : toks_(tokenize(src)) {}

  ProblemFile parse_file() {
    ProblemFile f;
    bool any_sig = false;
    while (!at_end()) {
      Token t = expect_ident("declaration keyword");
      if (t.text == "sort") {
        parse_sort(f.pres.sig);
        any_sig = true;
      } else if (t.text == "tycon") {
        parse_tycon(f.pres.sig);
        any_sig = true;
      } else if (t.text == "op") {
        parse_op(f.pres.sig);
        any_sig = true;
      } else if (t.text == "axiom") {
        parse_axiom(f.pres);
      } else if (t.text == "problem") {
        parse_problem(f);
      } else {
        fail("expected sort, tycon, op, axiom, or problem", t);
      }
    }
    if (!any_sig) throw ParseError("no signature", 1, 1);
    return f;
  }

  // Parses a single term against the given file, metavariable context, and
  // variable context; the term is elaborated by type inference.
  static std::pair<Term, TypeExpr> parse_term_string(const ProblemFile& f, const MetaContext& metas,
                                                     const VarContext& ctx,
                                                     const std::string& text) {
    Parser p(text);
    std::vector<std::string> scope;
    for (size_t i = 0; i < ctx.size(); ++i) scope.push_back(ctx.name_of_index((int)ctx.size() - 1 - (int)i));
    Term raw = p.parse_term(scope);
    if (!p.at_end()) p.fail("trailing input after term", p.peek());
    return infer_type(f.pres.sig, metas, ctx, raw);
  }

  // Parses a term and checks it against an expected type (needed when the
  // type cannot be inferred bottom-up, e.g. an abs argument position).
  static Term parse_term_checked(const ProblemFile& f, const MetaContext& metas,
                                 const VarContext& ctx, const std::string& text,
                                 const TypeExpr& type) {
    Parser p(text);
    std::vector<std::string> scope;
    for (size_t i = 0; i < ctx.size(); ++i)
      scope.push_back(ctx.name_of_index((int)ctx.size() - 1 - (int)i));
    Term raw = p.parse_term(scope);
    if (!p.at_end()) p.fail("trailing input after term", p.peek());
    return typecheck(f.pres.sig, metas, ctx, raw, type);
  }

  static TypeExpr parse_type_string(const ProblemFile& f, const std::string& text) {
    Parser p(text);
    TypeExpr t = p.parse_type({});
    if (!p.at_end()) p.fail("trailing input after type", p.peek());
    f.pres.sig.check_type(t);
    return t;
  }

  // Parses a context specification `x : tau, y : tau` (may be empty).
  static VarContext parse_context_string(const ProblemFile& f, const std::string& text) {
    Parser p(text);
    VarContext ctx;
    if (p.at_end()) return ctx;
    for (;;) {
      Token n = p.expect_ident("variable name");
      p.expect_punct(":");
      TypeExpr ty = p.parse_type({});
      f.pres.sig.check_type(ty);
      ctx.push(ty, n.text);
      if (p.at_end()) break;
      p.expect_punct(",");
    }
    return ctx;
  }

  // Parses a substitution file: optional `exists M : [..]t, ... .` header
  // declaring codomain metavariables, then entries `M[z1, z2] |-> term .`.
  static MetaSubstitution parse_subst_file(const ProblemFile& f, const NamedProblem& P,
                                           const std::string& text) {
    Parser p(text);
    MetaSubstitution s;
    s.domain = P.metas;
    MetaContext cod;
    if (!p.at_end() && p.peek().kind == Token::Kind::Ident && p.peek().text == "exists") {
      p.next();
      p.parse_meta_decls(f.pres.sig, {}, cod, ".");
      p.expect_punct(".");
    }
    for (const auto& d : P.metas.decls())
      if (!cod.contains(d.name)) cod.add(d);
    while (!p.at_end()) {
      Token name = p.expect_ident("metavariable name");
      const MetaDecl* d = P.metas.find(name.text);
      if (!d) p.fail("metavariable " + name.text + " is not declared by the problem", name);
      p.expect_punct("[");
      std::vector<std::string> binders;
      if (!p.peek_is_punct("]")) {
        for (;;) {
          binders.push_back(p.expect_ident("parameter name").text);
          if (p.peek_is_punct("]")) break;
          p.expect_punct(",");
        }
      }
      p.expect_punct("]");
      if (binders.size() != d->params.size())
        p.fail("entry for " + name.text + " must list " + std::to_string(d->params.size()) +
                   " parameters",
               name);
      p.expect_punct("|->");
      std::vector<std::string> scope;
      for (size_t i = 0; i < P.ctx.size(); ++i)
        scope.push_back(P.ctx.name_of_index((int)P.ctx.size() - 1 - (int)i));
      for (const auto& b : binders) scope.push_back(b);
      Term raw = p.parse_term(scope);
      p.expect_punct(".");
      VarContext inner = P.ctx.extended(d->params, binders);
      MetaContext checkctx = cod;
      Term body = typecheck(f.pres.sig, checkctx, inner, raw, d->result);
      if (s.maps(name.text)) p.fail("duplicate entry for " + name.text, name);
      s.map[name.text] = ScopedTerm((int)binders.size(), body, binders);
    }
    // Codomain: declared header entries plus unmapped problem metavariables.
    std::set<std::string> used;
    for (const auto& [n, body] : s.map) collect_free_metavariables(body.body, used);
    for (const auto& d : cod.decls())
      if (used.count(d.name) || (!s.maps(d.name) && P.metas.contains(d.name)))
        s.codomain.add(d);
    return s;
  }

 private:
  static std::vector<Token> tokenize(const std::string& src) {
    Lexer lx(src);
    std::vector<Token> out;
    for (;;) {
      Token t = lx.next();
      bool end = t.kind == Token::Kind::End;
      out.push_back(std::move(t));
      if (end) break;
    }
    return out;
  }

  bool at_end() const { return toks_[pos_].kind == Token::Kind::End; }
  const Token& peek() const { return toks_[pos_]; }
  const Token& peek2() const {
    return toks_[pos_ + 1 < toks_.size() ? pos_ + 1 : toks_.size() - 1];
  }
  Token next() { return toks_[at_end() ? pos_ : pos_++]; }

  [[noreturn]] void fail(const std::string& msg, const Token& t) const {
    throw ParseError(msg + " (found '" + t.text + "')", t.line, t.col);
  }

  Token expect_ident(const std::string& what) {
    if (peek().kind != Token::Kind::Ident) fail("expected " + what, peek());
    return next();
  }
  Token expect_number(const std::string& what) {
    if (peek().kind != Token::Kind::Number) fail("expected " + what, peek());
    return next();
  }
  bool peek_is_punct(const std::string& p) const {
    return peek().kind == Token::Kind::Punct && peek().text == p;
  }
  bool peek_is_ident(const std::string& p) const {
    return peek().kind == Token::Kind::Ident && peek().text == p;
  }
  void expect_punct(const std::string& p) {
    if (!peek_is_punct(p)) fail("expected '" + p + "'", peek());
    next();
  }

  // ----- declarations -------------------------------------------------------
  void parse_sort(Signature& sig) {
    Token n = expect_ident("sort name");
    if (sig.has_type_con(n.text)) fail("duplicate sort or type constructor " + n.text, n);
    sig.sorts.insert(n.text);
    expect_punct(".");
  }

  void parse_tycon(Signature& sig) {
    Token n = expect_ident("type constructor name");
    Token a = expect_number("arity");
    if (sig.has_type_con(n.text)) fail("duplicate sort or type constructor " + n.text, n);
    sig.type_constructors[n.text] = std::stoi(a.text);
    expect_punct(".");
  }

  std::vector<std::string> parse_tvar_list() {
    std::vector<std::string> tv;
    if (peek_is_punct("<")) {
      next();
      for (;;) {
        tv.push_back(expect_ident("schematic type variable").text);
        if (peek_is_punct(">")) break;
        expect_punct(",");
      }
      next();
    }
    return tv;
  }

  void parse_op(Signature& sig) {
    Token n = expect_ident("operator name");
    if (sig.operators.count(n.text)) fail("duplicate operator " + n.text, n);
    OperatorDecl decl;
    decl.name = n.text;
    decl.type_vars = parse_tvar_list();
    std::set<std::string> tvs(decl.type_vars.begin(), decl.type_vars.end());
    expect_punct(":");
    expect_punct("(");
    if (!peek_is_punct(")")) {
      for (;;) {
        decl.args.push_back(parse_arg_arity(tvs));
        if (peek_is_punct(")")) break;
        expect_punct(",");
      }
    }
    next();  // ')'
    expect_punct("->");
    decl.result = parse_type(tvs);
    expect_punct(".");
    for (const auto& a : decl.args) {
      for (const auto& b : a.binders) sig.check_type(b, tvs);
      sig.check_type(a.body, tvs);
    }
    sig.check_type(decl.result, tvs);
    sig.operators[decl.name] = decl;
  }

  // One argument slot: `tau1 ... tauk . tau` (binder types juxtaposed) or a
  // bare `tau`.
  ArgArity parse_arg_arity(const std::set<std::string>& tvs) {
    std::vector<TypeExpr> types;
    types.push_back(parse_type(tvs));
    while (peek().kind == Token::Kind::Ident || peek_is_punct("(")) types.push_back(parse_type(tvs));
    ArgArity ar;
    if (peek_is_punct(".")) {
      next();
      ar.binders = std::move(types);
      ar.body = parse_type(tvs);
    } else {
      if (types.size() != 1) fail("expected '.' after binder types", peek());
      ar.body = types[0];
    }
    return ar;
  }

  // metadecls ::= name : [tau, ...]tau (, ...)   -- may be empty
  void parse_meta_decls(const Signature& sig, const std::set<std::string>& tvs, MetaContext& out,
                        const std::string& stop) {
    if (peek_is_punct(stop) || (stop == "|-" && peek_is_punct("|-"))) return;
    for (;;) {
      Token n = expect_ident("metavariable name");
      expect_punct(":");
      expect_punct("[");
      MetaDecl d;
      d.name = n.text;
      if (!peek_is_punct("]")) {
        for (;;) {
          d.params.push_back(parse_type(tvs));
          if (peek_is_punct("]")) break;
          expect_punct(",");
        }
      }
      next();  // ']'
      d.result = parse_type(tvs);
      for (const auto& p : d.params) sig.check_type(p, tvs);
      sig.check_type(d.result, tvs);
      if (out.contains(d.name)) fail("duplicate metavariable " + d.name, n);
      out.add(std::move(d));
      if (!peek_is_punct(",")) break;
      next();
    }
  }

  void parse_axiom(Presentation& pres) {
    Token n = expect_ident("axiom name");
    if (pres.find_axiom(n.text)) fail("duplicate axiom " + n.text, n);
    Axiom ax;
    ax.name = n.text;
    ax.type_vars = parse_tvar_list();
    std::set<std::string> tvs(ax.type_vars.begin(), ax.type_vars.end());
    expect_punct(":");
    parse_meta_decls(pres.sig, tvs, ax.metas, "|-");
    expect_punct("|-");
    std::vector<std::string> scope;
    Term lhs = parse_term(scope);
    if (peek_is_punct("==")) {
      ax.oriented = false;
    } else if (peek_is_punct("-->")) {
      ax.oriented = true;
    } else {
      fail("expected '==' or '-->'", peek());
    }
    next();
    Term rhs = parse_term(scope);
    expect_punct(":");
    ax.type = parse_type(tvs);
    pres.sig.check_type(ax.type, tvs);
    expect_punct(".");
    ax.lhs = typecheck(pres.sig, ax.metas, {}, lhs, ax.type, tvs);
    ax.rhs = typecheck(pres.sig, ax.metas, {}, rhs, ax.type, tvs);
    if (alpha_equal(ax.lhs, ax.rhs))
      fail("degenerate axiom " + ax.name + ": both sides are alpha-equal", n);
    pres.axioms.push_back(std::move(ax));
  }

  void parse_problem(ProblemFile& f) {
    Token n = expect_ident("problem name");
    if (f.find_problem(n.text)) fail("duplicate problem " + n.text, n);
    NamedProblem P;
    P.name = n.text;
    expect_punct(":");
    if (peek_is_ident("exists")) {
      next();
      parse_meta_decls(f.pres.sig, {}, P.metas, ".");
      expect_punct(".");
    }
    if (peek_is_ident("forall")) {
      next();
      for (;;) {
        Token v = expect_ident("variable name");
        expect_punct(":");
        TypeExpr ty = parse_type({});
        f.pres.sig.check_type(ty);
        P.ctx.push(ty, v.text);
        if (!peek_is_punct(",")) break;
        next();
      }
      expect_punct(".");
    }
    std::vector<std::string> scope;
    for (size_t i = 0; i < P.ctx.size(); ++i)
      scope.push_back(P.ctx.name_of_index((int)P.ctx.size() - 1 - (int)i));
    for (;;) {
      Term lhs = parse_term(scope);
      expect_punct("==");
      Term rhs = parse_term(scope);
      expect_punct(":");
      TypeExpr ty = parse_type({});
      f.pres.sig.check_type(ty);
      Constraint c;
      c.ctx = P.ctx;
      c.type = ty;
      c.lhs = typecheck(f.pres.sig, P.metas, P.ctx, lhs, ty);
      c.rhs = typecheck(f.pres.sig, P.metas, P.ctx, rhs, ty);
      P.constraints.push_back(std::move(c));
      if (peek_is_punct("/\\")) {
        next();
        continue;
      }
      break;
    }
    expect_punct(".");
    f.problems.push_back(std::move(P));
  }

  // ----- types --------------------------------------------------------------
  // arrow (right-assoc, loosest) > product (left-assoc) > atom
  TypeExpr parse_type(const std::set<std::string>& tvs) {
    TypeExpr lhs = parse_type_prod(tvs);
    if (peek_is_punct("->")) {
      next();
      TypeExpr rhs = parse_type(tvs);
      return TypeExpr::con("arrow", {std::move(lhs), std::move(rhs)});
    }
    return lhs;
  }

  TypeExpr parse_type_prod(const std::set<std::string>& tvs) {
    TypeExpr lhs = parse_type_atom(tvs);
    while (peek_is_punct("*")) {
      next();
      TypeExpr rhs = parse_type_atom(tvs);
      lhs = TypeExpr::con("prod", {std::move(lhs), std::move(rhs)});
    }
    return lhs;
  }

  TypeExpr parse_type_atom(const std::set<std::string>& tvs) {
    if (peek_is_punct("(")) {
      next();
      TypeExpr t = parse_type(tvs);
      expect_punct(")");
      return t;
    }
    Token n = expect_ident("type");
    if (tvs.count(n.text)) return TypeExpr::var(n.text);
    if (peek_is_punct("(")) {
      next();
      std::vector<TypeExpr> args;
      if (!peek_is_punct(")")) {
        for (;;) {
          args.push_back(parse_type(tvs));
          if (peek_is_punct(")")) break;
          expect_punct(",");
        }
      }
      next();
      return TypeExpr::con(n.text, std::move(args));
    }
    return TypeExpr::con(n.text);
  }

  // ----- terms --------------------------------------------------------------
  // term ::= ident                    variable (must be in scope)
  //        | ident [ terms ]          metavariable occurrence
  //        | ident ( opargs )         operator application
  // oparg ::= [ident ... ident .] term
  Term parse_term(std::vector<std::string>& scope) {
    Token n = expect_ident("term");
    if (peek_is_punct("[")) {
      next();
      std::vector<Term> params;
      if (!peek_is_punct("]")) {
        for (;;) {
          params.push_back(parse_term(scope));
          if (peek_is_punct("]")) break;
          expect_punct(",");
        }
      }
      next();
      return Term::meta(n.text, std::move(params));
    }
    if (peek_is_punct("(")) {
      next();
      std::vector<ScopedTerm> args;
      if (!peek_is_punct(")")) {
        for (;;) {
          args.push_back(parse_oparg(scope));
          if (peek_is_punct(")")) break;
          expect_punct(",");
        }
      }
      next();
      return Term::op(n.text, {}, std::move(args));
    }
    for (int i = (int)scope.size() - 1; i >= 0; --i) {
      if (scope[(size_t)i] == n.text) return Term::var((int)scope.size() - 1 - i);
    }
    fail("unknown variable " + n.text +
             " (operators need '()' and metavariable occurrences need '[]')",
         n);
  }

  ScopedTerm parse_oparg(std::vector<std::string>& scope) {
    // Lookahead: a run of identifiers followed by '.' is a binder list.
    size_t save = pos_;
    std::vector<std::string> binders;
    while (peek().kind == Token::Kind::Ident) binders.push_back(next().text);
    if (!binders.empty() && peek_is_punct(".")) {
      next();
      size_t base = scope.size();
      for (const auto& b : binders) scope.push_back(b);
      Term body = parse_term(scope);
      scope.resize(base);
      return ScopedTerm((int)binders.size(), std::move(body), binders);
    }
    pos_ = save;
    return ScopedTerm(0, parse_term(scope));
  }

  std::vector<Token> toks_;
  size_t pos_ = 0;
};

}  // namespace detail

inline ProblemFile parse_file(const std::string& text) {
  return detail::Parser(text).parse_file();
}

inline std::pair<Term, TypeExpr> parse_term_string(const ProblemFile& f, const MetaContext& metas,
                                                   const VarContext& ctx, const std::string& text) {
  return detail::Parser::parse_term_string(f, metas, ctx, text);
}

inline VarContext parse_context_string(const ProblemFile& f, const std::string& text) {
  return detail::Parser::parse_context_string(f, text);
}

inline Term parse_term_checked(const ProblemFile& f, const MetaContext& metas,
                               const VarContext& ctx, const std::string& text,
                               const TypeExpr& type) {
  return detail::Parser::parse_term_checked(f, metas, ctx, text, type);
}

inline TypeExpr parse_type_string(const ProblemFile& f, const std::string& text) {
  return detail::Parser::parse_type_string(f, text);
}

inline MetaSubstitution parse_subst_file(const ProblemFile& f, const NamedProblem& P,
                                         const std::string& text) {
  return detail::Parser::parse_subst_file(f, P, text);
}

// Renders a substitution in the text format parse_subst_file accepts:
// an optional `exists` header for codomain metavariables the problem does not
// declare, then one `M[z1, ...] |-> body .` entry per mapped metavariable.
inline std::string subst_to_file_text(const NamedProblem& P, const MetaSubstitution& s) {
  std::ostringstream os;
  std::vector<std::string> header;
  for (const auto& d : s.codomain.decls())
    if (!P.metas.contains(d.name)) header.push_back(meta_decl_to_string(d));
  if (!header.empty()) {
    os << "exists ";
    for (size_t i = 0; i < header.size(); ++i) os << (i ? ", " : "") << header[i];
    os << " .\n";
  }
  std::set<std::string> taken(P.ctx.names().begin(), P.ctx.names().end());
  for (const auto& [name, body] : s.map) {
    const MetaDecl* d = P.metas.find(name);
    if (!d) continue;  // entries outside the problem context are not printable
    std::vector<std::string> binders;
    for (size_t j = 0; j < d->params.size(); ++j) {
      std::string b = "z" + std::to_string(j + 1);
      while (taken.count(b)) b = "z" + b;
      binders.push_back(b);
    }
    os << name << "[";
    for (size_t j = 0; j < binders.size(); ++j) os << (j ? ", " : "") << binders[j];
    os << "] |-> "
       << term_to_string(body.body, P.ctx.extended(d->params, binders)) << " .\n";
  }
  return os.str();
}

}  // namespace soas
