#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"

using namespace soas;
using testutil::Rng;

namespace {

TypeExpr star() { return TypeExpr{TypeExpr::Kind::Con, "star", {}}; }

Signature untyped_sig() { return testutil::load_data_file("untyped.soas").pres.sig; }

Term app(Term a, Term b) {
  return Term::op("app", {}, {ScopedTerm(0, std::move(a)), ScopedTerm(0, std::move(b))});
}
Term abs(Term body) {
  return Term::op("abs", {}, {ScopedTerm(1, std::move(body))});
}

}  // namespace

TEST_CASE("subst_vars agrees with the named-variable oracle") {
  Signature sig = untyped_sig();
  Rng rng(20240817);
  int cases = 0;
  while (cases < 200) {
    int ambient = testutil::pick(rng, 0, 2);
    int k = testutil::pick(rng, 1, 2);
    VarContext actx;
    for (int i = 0; i < ambient; ++i) actx.push(star());
    VarContext full = actx;
    for (int i = 0; i < k; ++i) full.push(star());
    auto pool_t = testutil::enumerate_terms(sig, MetaContext{}, full, star(), 5);
    auto pool_v = testutil::enumerate_terms(sig, MetaContext{}, actx, star(), 4);
    if (pool_t.empty() || pool_v.empty()) continue;
    Term t = testutil::choose(rng, pool_t);
    std::vector<Term> values;
    for (int i = 0; i < k; ++i) values.push_back(testutil::choose(rng, pool_v));
    Term got = subst_vars(t, values);
    Term want = testutil::oracle_subst_vars(t, values, ambient);
    CHECK(alpha_equal(got, want));
    ++cases;
  }
}

TEST_CASE("subst_vars plugs values under binders with correct shifting") {
  // t = abs(w. app(v0, w)) where v0 is the variable being discharged;
  // substituting y (ambient index 0) must shift it under the abs binder.
  Term t = abs(app(Term::var(1), Term::var(0)));
  Term r = subst_vars(t, {Term::var(0)});
  CHECK(alpha_equal(r, abs(app(Term::var(1), Term::var(0)))));
  // Substituting a closed term leaves no trace of the binder.
  Term closed = abs(Term::var(0));
  Term r2 = subst_vars(t, {closed});
  CHECK(alpha_equal(r2, abs(app(abs(Term::var(0)), Term::var(0)))));
}

TEST_CASE("apply_meta: the recursive definition on a worked example") {
  // theta = [m[z] |-> abs(x. app(z, x))]
  MetaSubstitution th;
  th.domain.add(MetaDecl{"m", {star()}, star()});
  th.map["m"] = ScopedTerm(1, abs(app(Term::var(1), Term::var(0))));

  // app(m[y], y) in context y  ~>  app(abs(x. app(y, x)), y)
  Term input = app(Term::meta("m", {Term::var(0)}), Term::var(0));
  Term expected = app(abs(app(Term::var(1), Term::var(0))), Term::var(0));
  CHECK(alpha_equal(apply_meta(th, input), expected));

  // Under a binder: abs(y. m[y]) ~> abs(y. abs(x. app(y, x)))
  Term under = abs(Term::meta("m", {Term::var(0)}));
  Term expected2 = abs(abs(app(Term::var(1), Term::var(0))));
  CHECK(alpha_equal(apply_meta(th, under), expected2));

  // Unmapped metavariables keep their head, parameters still substituted.
  MetaSubstitution id = MetaSubstitution::identity();
  CHECK(alpha_equal(apply_meta(id, input), input));
}

TEST_CASE("apply_meta on nested occurrences substitutes parameters first") {
  // theta = [m[z] |-> z]; m[m[y]] ~> y
  MetaSubstitution th;
  th.domain.add(MetaDecl{"m", {star()}, star()});
  th.map["m"] = ScopedTerm(1, Term::var(0));
  Term input = Term::meta("m", {Term::meta("m", {Term::var(0)})});
  CHECK(alpha_equal(apply_meta(th, input), Term::var(0)));
}

TEST_CASE("property: compose is application composition") {
  Signature sig = untyped_sig();
  MetaContext metas;
  metas.add(MetaDecl{"A", {}, star()});
  metas.add(MetaDecl{"B", {star()}, star()});
  VarContext ctx;
  ctx.push(star(), "y");

  Rng rng(42);
  auto pool_t = testutil::enumerate_terms(sig, metas, ctx, star(), 5);
  VarContext bctx = ctx.extended({star()});
  auto pool_b = testutil::enumerate_terms(sig, metas, bctx, star(), 4);
  auto pool_a = testutil::enumerate_terms(sig, metas, ctx, star(), 4);
  REQUIRE_FALSE(pool_t.empty());
  for (int i = 0; i < 100; ++i) {
    MetaSubstitution th1 = MetaSubstitution::identity(metas);
    th1.map["A"] = ScopedTerm(0, testutil::choose(rng, pool_a));
    MetaSubstitution th2 = MetaSubstitution::identity(metas);
    th2.map["B"] = ScopedTerm(1, testutil::choose(rng, pool_b));
    Term t = testutil::choose(rng, pool_t);
    Term two_steps = apply_meta(th2, apply_meta(th1, t));
    Term one_step = apply_meta(compose(th2, th1), t);
    CHECK(alpha_equal(two_steps, one_step));
  }
}

TEST_CASE("identity substitution is a compose unit") {
  MetaContext metas;
  metas.add(MetaDecl{"A", {}, star()});
  MetaSubstitution th = MetaSubstitution::identity(metas);
  th.map["A"] = ScopedTerm(0, abs(Term::var(0)));
  MetaSubstitution id = MetaSubstitution::identity(metas);
  CHECK(canon_subst_key(compose(th, id)) == canon_subst_key(th));
  CHECK(canon_subst_key(compose(id, th)) == canon_subst_key(th));
}

TEST_CASE("parametrise replaces existential variables by nullary metavariables") {
  // exists z : star (outermost), forall y : star; constraint app(z, y) == y.
  VarContext exist;
  exist.push(star(), "z");
  VarContext forall;
  forall.push(star(), "y");
  Constraint c{forall, app(Term::var(1), Term::var(0)), Term::var(0), star()};
  MetaContext metas;
  NameSupply supply;
  Constraint p = parametrise(metas, exist, c, supply);
  REQUIRE(metas.decls().size() == 1);
  const MetaDecl& hat = metas.decls()[0];
  CHECK(hat.params.empty());
  CHECK(hat.result == star());
  CHECK(alpha_equal(p.lhs, app(Term::meta(hat.name, {}), Term::var(0))));
  CHECK(alpha_equal(p.rhs, Term::var(0)));
  // No variable of the parametrised sides escapes the forall context.
  for (int v : free_vars(p.lhs)) CHECK(v < (int)forall.size());
}

TEST_CASE("name supply is injective and respects the avoid set") {
  NameSupply s({"m1", "m2"});
  std::set<std::string> seen;
  for (int i = 0; i < 50; ++i) {
    std::string n = s.fresh("m");
    CHECK(n != "m1");
    CHECK(n != "m2");
    CHECK(seen.insert(n).second);
  }
  // Numeric suffixes are stripped before numbering, so m7 renames to a fresh m<k>.
  NameSupply s2;
  CHECK(s2.fresh("m7") == "m1");
}

TEST_CASE("renaming substitution maps each metavariable to its new name") {
  MetaContext metas;
  metas.add(MetaDecl{"M", {star()}, star()});
  metas.add(MetaDecl{"N", {}, star()});
  NameSupply supply(metas.names());
  MetaContext renamed = metas;
  Renaming ren = freshen_context(renamed, supply);
  CHECK(renamed.decls().size() == 2);
  CHECK_FALSE(renamed.contains("M"));
  MetaSubstitution rs = renaming_substitution(metas, ren);
  Term occ = Term::meta("M", {Term::var(0)});
  Term out = apply_meta(rs, occ);
  CHECK(out.as_meta()->name == ren.forward.at("M"));
  CHECK(alpha_equal(out.as_meta()->params[0], Term::var(0)));
}
