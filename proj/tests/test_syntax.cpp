#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"

using namespace soas;

namespace {

TypeExpr con(const std::string& n, std::vector<TypeExpr> args = {}) {
  return TypeExpr{TypeExpr::Kind::Con, n, std::move(args)};
}

Signature stlc_signature() {
  return testutil::load_data_file("stlc.soas").pres.sig;
}

}  // namespace

TEST_CASE("type expressions: structure, equality, printing") {
  TypeExpr s = con("s"), t = con("t");
  TypeExpr arr = con("arrow", {s, t});
  CHECK(arr == con("arrow", {s, t}));
  CHECK_FALSE(arr == con("arrow", {t, s}));
  CHECK(type_to_string(arr) == "s -> t");
  CHECK(type_to_string(con("prod", {s, t})) == "s * t");
  // Arrow is right-associative, product binds tighter.
  CHECK(type_to_string(con("arrow", {arr, t})) == "(s -> t) -> t");
  CHECK(type_to_string(con("arrow", {s, con("arrow", {s, t})})) == "s -> s -> t");
  CHECK(type_to_string(con("prod", {arr, con("arrow", {arr, t})})) ==
        "(s -> t) * ((s -> t) -> t)");
}

TEST_CASE("type matching instantiates schematic variables") {
  TypeExpr s = con("s"), t = con("t");
  TypeExpr pat = con("arrow", {TypeExpr{TypeExpr::Kind::Var, "x", {}},
                               TypeExpr{TypeExpr::Kind::Var, "y", {}}});
  TypeAssignment a;
  REQUIRE(match_type(pat, con("arrow", {s, t}), a));
  CHECK(a.at("x") == s);
  CHECK(a.at("y") == t);
  CHECK(apply_type_assignment(pat, a) == con("arrow", {s, t}));
  TypeAssignment b;
  CHECK_FALSE(match_type(pat, s, b));
  // An already-bound variable must match consistently.
  TypeExpr both = con("arrow", {TypeExpr{TypeExpr::Kind::Var, "x", {}},
                                TypeExpr{TypeExpr::Kind::Var, "x", {}}});
  TypeAssignment c;
  CHECK_FALSE(match_type(both, con("arrow", {s, t}), c));
}

TEST_CASE("variable contexts: indexing is innermost-first") {
  TypeExpr s = con("s"), t = con("t");
  VarContext ctx;
  ctx.push(s, "x");
  ctx.push(t, "y");
  REQUIRE(ctx.size() == 2);
  CHECK(ctx.type_of_index(0) == t);  // y is innermost
  CHECK(ctx.type_of_index(1) == s);
  CHECK(ctx.name_of_index(0) == "y");
  CHECK(ctx.name_of_index(1) == "x");
  CHECK_THROWS_AS((void)ctx.type_of_index(2), TypeError);

  VarContext ext = ctx.extended({s, s}, {"u", "v"});
  CHECK(ext.size() == 4);
  CHECK(ext.type_of_index(0) == s);
  CHECK(ext.name_of_index(0) == "v");
  CHECK(ext.name_of_index(3) == "x");
  // Extension does not mutate the original (contexts share structure).
  CHECK(ctx.size() == 2);
}

TEST_CASE("alpha equality ignores display names, sees structure") {
  Term a = Term::op("abs", {}, {ScopedTerm(1, Term::var(0), {"x"})});
  Term b = Term::op("abs", {}, {ScopedTerm(1, Term::var(0), {"y"})});
  Term c = Term::op("abs", {}, {ScopedTerm(1, Term::var(1), {"x"})});
  CHECK(alpha_equal(a, b));
  CHECK_FALSE(alpha_equal(a, c));
  CHECK(term_size(a) == 2);
  CHECK(free_vars(a).empty());
  CHECK(free_vars(c) == std::set<int>{0});
}

TEST_CASE("shift_term adjusts only free indices") {
  // abs(x. app(x, y)) with y free at index 0 under one binder (index 1 inside).
  Term t = Term::op("app", {}, {ScopedTerm(0, Term::var(0)), ScopedTerm(0, Term::var(1))});
  Term under = Term::op("abs", {}, {ScopedTerm(1, t)});
  Term shifted = shift_term(under, 2);
  const auto* o = shifted.as_op();
  const auto* inner = o->args[0].body.as_op();
  CHECK(inner->args[0].body.as_var()->index == 0);  // bound occurrence unchanged
  CHECK(inner->args[1].body.as_var()->index == 3);  // free occurrence shifted
}

TEST_CASE("typechecking the lambda-calculus examples") {
  Signature sig = stlc_signature();
  TypeExpr s = con("s"), t = con("t");
  MetaContext metas;
  metas.add(MetaDecl{"M", {s}, t});
  VarContext ctx;
  ctx.push(con("arrow", {s, t}), "f");
  ctx.push(s, "y");

  // app(f, y) : t
  Term app_fy = Term::op("app", {}, {ScopedTerm(0, Term::var(1)), ScopedTerm(0, Term::var(0))});
  Term el = typecheck(sig, metas, ctx, app_fy, t);
  CHECK(el.as_op()->inst == std::vector<TypeExpr>{s, t});

  // abs(x. M[x]) : s -> t
  Term absm = Term::op("abs", {}, {ScopedTerm(1, Term::meta("M", {Term::var(0)}), {"x"})});
  CHECK_NOTHROW(typecheck(sig, metas, ctx, absm, con("arrow", {s, t})));

  // pair(y, y) : s * s
  Term pr = Term::op("pair", {}, {ScopedTerm(0, Term::var(0)), ScopedTerm(0, Term::var(0))});
  CHECK_NOTHROW(typecheck(sig, metas, ctx, pr, con("prod", {s, s})));

  SUBCASE("errors") {
    CHECK_THROWS_AS(typecheck(sig, metas, ctx, app_fy, s), TypeError);  // wrong result type
    CHECK_THROWS_AS(typecheck(sig, metas, ctx, Term::var(7), t), TypeError);  // out of scope
    CHECK_THROWS_AS(typecheck(sig, metas, ctx, Term::meta("M", {}), t),
                    TypeError);  // arity mismatch
    CHECK_THROWS_AS(typecheck(sig, metas, ctx, Term::meta("Z", {}), t),
                    TypeError);  // unknown metavariable
    Term bad_app = Term::op("app", {}, {ScopedTerm(0, Term::var(0)), ScopedTerm(0, Term::var(0))});
    CHECK_THROWS_AS(typecheck(sig, metas, ctx, bad_app, t), TypeError);  // y is not a function
  }
}

TEST_CASE("inference elaborates operator instantiations") {
  Signature sig = stlc_signature();
  TypeExpr s = con("s"), t = con("t");
  VarContext ctx;
  ctx.push(con("arrow", {s, t}), "f");
  // fst(pair(f, f)) infers (s->t) * (s->t) for the pair.
  Term inner = Term::op("pair", {}, {ScopedTerm(0, Term::var(0)), ScopedTerm(0, Term::var(0))});
  Term outer = Term::op("fst", {}, {ScopedTerm(0, inner)});
  auto [el, ty] = infer_type(sig, MetaContext{}, ctx, outer);
  CHECK(ty == con("arrow", {s, t}));
  CHECK(el.as_op()->inst == std::vector<TypeExpr>{con("arrow", {s, t}), con("arrow", {s, t})});
}

TEST_CASE("mixed-operator lint flags exactly the mixed operators") {
  ProblemFile mu = testutil::load_data_file("lambda-mu.soas");
  auto warnings = mixed_operator_lint(mu.pres.sig);
  std::set<std::string> flagged;
  for (const auto& w : warnings) flagged.insert(w.op_name);
  // Only subst mixes binding and non-binding argument positions; named takes
  // two non-binding arguments and mu a single binding one.
  CHECK(flagged == std::set<std::string>{"subst"});
  for (const auto& w : warnings)
    CHECK(w.message.find("the search may miss solutions") != std::string::npos);

  CHECK(mixed_operator_lint(stlc_signature()).empty());
}

TEST_CASE("metavariable contexts reject duplicates and preserve order") {
  TypeExpr s = con("s");
  MetaContext m;
  m.add(MetaDecl{"A", {}, s});
  m.add(MetaDecl{"B", {s}, s});
  CHECK(m.contains("A"));
  CHECK(m.get("B").params.size() == 1);
  CHECK_THROWS_AS(m.add(MetaDecl{"A", {}, s}), TypeError);
  CHECK_THROWS_AS((void)m.get("C"), TypeError);
  MetaContext copy = m;
  copy.add(MetaDecl{"C", {}, s});
  CHECK_FALSE(m.contains("C"));  // copies do not share mutations
  CHECK(m.names() == std::set<std::string>{"A", "B"});
}

TEST_CASE("property: typecheck accepts everything the enumerator produces") {
  Signature sig = stlc_signature();
  TypeExpr s = con("s"), t = con("t");
  MetaContext metas;
  metas.add(MetaDecl{"M", {s}, t});
  VarContext ctx;
  ctx.push(s, "y");
  for (const auto& ty : {t, s, con("arrow", {s, t})}) {
    for (const auto& term : testutil::enumerate_terms(sig, metas, ctx, ty, 4))
      CHECK_NOTHROW(typecheck(sig, metas, ctx, term, ty));
  }
}
