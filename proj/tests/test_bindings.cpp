#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"

using namespace soas;

namespace {

TypeExpr con(const std::string& n, std::vector<TypeExpr> args = {}) {
  return TypeExpr{TypeExpr::Kind::Con, n, std::move(args)};
}

const Signature& stlc_signature() {
  static Signature sig = testutil::load_data_file("stlc.soas").pres.sig;
  return sig;
}

// The context a binding body lives in: the codomain metavariables plus the
// z-block of the replaced declaration's parameters.
void check_body_types(const Signature& sig, const BindingResult& r, const MetaContext& theta) {
  for (const auto& [name, body] : r.subst.map) {
    const MetaDecl& d = theta.get(name);
    REQUIRE((int)d.params.size() == body.binders);
    VarContext zs = VarContext{}.extended(d.params, {});
    CHECK_NOTHROW(typecheck(sig, r.subst.codomain, zs, body.body, d.result));
  }
}

std::set<std::string> names_of(const MetaContext& m) { return m.names(); }

}  // namespace

TEST_CASE("projection maps a metavariable to one of its parameters") {
  TypeExpr s = con("s"), t = con("t");
  MetaContext theta;
  theta.add(MetaDecl{"m", {s, t}, t});
  theta.add(MetaDecl{"other", {}, s});

  BindingResult r = jp_projection(theta, "m", 1);
  // m[z1, z2] |-> z2 : two binders, innermost index is the second parameter.
  REQUIRE(r.subst.map.count("m") == 1);
  const ScopedTerm& body = r.subst.map.at("m");
  CHECK(body.binders == 2);
  CHECK(alpha_equal(body.body, Term::var(0)));
  CHECK(r.fresh.decls().empty());
  CHECK(names_of(r.subst.codomain) == std::set<std::string>{"other"});
  check_body_types(stlc_signature(), r, theta);

  // Applying it substitutes the chosen parameter.
  Term occ = Term::meta("m", {Term::var(1), Term::var(0)});
  CHECK(alpha_equal(apply_meta(r.subst, occ), Term::var(0)));

  SUBCASE("errors") {
    // Parameter 0 has type s, result is t: ill-typed projection.
    CHECK_THROWS_AS(jp_projection(theta, "m", 0), TypeError);
    CHECK_THROWS_AS(jp_projection(theta, "m", 2), TypeError);
    CHECK_THROWS_AS(jp_projection(theta, "m", -1), TypeError);
  }
}

TEST_CASE("imitation builds an operator skeleton over fresh metavariables") {
  const Signature& sig = stlc_signature();
  TypeExpr s = con("s"), t = con("t");
  MetaContext theta;
  theta.add(MetaDecl{"m", {s}, t});

  SUBCASE("operator without binders") {
    NameSupply supply(theta.names());
    BindingResult r = imitation(theta, "m", sig.op("app"), {s, t}, supply);
    // m[z] |-> app(m1[z], m2[z]) with m1 : [s]s -> t and m2 : [s]s.
    REQUIRE(r.fresh.decls().size() == 2);
    const MetaDecl& m1 = r.fresh.decls()[0];
    const MetaDecl& m2 = r.fresh.decls()[1];
    CHECK(m1.params == std::vector<TypeExpr>{s});
    CHECK(m1.result == con("arrow", {s, t}));
    CHECK(m2.params == std::vector<TypeExpr>{s});
    CHECK(m2.result == s);
    const ScopedTerm& body = r.subst.map.at("m");
    CHECK(body.binders == 1);
    Term expect = Term::op("app", {s, t},
                           {ScopedTerm(0, Term::meta(m1.name, {Term::var(0)})),
                            ScopedTerm(0, Term::meta(m2.name, {Term::var(0)}))});
    CHECK(alpha_equal(body.body, expect));
    CHECK(names_of(r.subst.codomain) == std::set<std::string>{m1.name, m2.name});
    check_body_types(sig, r, theta);
  }

  SUBCASE("operator with a binder extends the fresh parameters") {
    MetaContext th2;
    th2.add(MetaDecl{"m", {s}, con("arrow", {s, t})});
    NameSupply supply(th2.names());
    BindingResult r = imitation(th2, "m", sig.op("abs"), {s, t}, supply);
    // m[z] |-> abs(x. m1[z, x]) with m1 : [s, s]t.
    REQUIRE(r.fresh.decls().size() == 1);
    const MetaDecl& m1 = r.fresh.decls()[0];
    CHECK(m1.params == std::vector<TypeExpr>{s, s});
    CHECK(m1.result == t);
    const ScopedTerm& body = r.subst.map.at("m");
    Term expect = Term::op(
        "abs", {s, t}, {ScopedTerm(1, Term::meta(m1.name, {Term::var(1), Term::var(0)}))});
    CHECK(alpha_equal(body.body, expect));
    check_body_types(sig, r, th2);
  }

  SUBCASE("result-type mismatch is rejected") {
    NameSupply supply(theta.names());
    // pair<s,t> yields s * t, but m's result is t.
    CHECK_THROWS_AS(imitation(theta, "m", sig.op("pair"), {s, t}, supply), TypeError);
    CHECK_THROWS_AS(imitation(theta, "m", sig.op("app"), {s}, supply), TypeError);
  }
}

TEST_CASE("elimination forgets a subset of parameters") {
  TypeExpr s = con("s"), t = con("t");
  MetaContext theta;
  theta.add(MetaDecl{"m", {s, t, s}, t});
  NameSupply supply(theta.names());

  BindingResult r = elimination(theta, "m", {0, 2}, supply);
  REQUIRE(r.fresh.decls().size() == 1);
  const MetaDecl& e = r.fresh.decls()[0];
  CHECK(e.params == std::vector<TypeExpr>{s, s});
  CHECK(e.result == t);
  const ScopedTerm& body = r.subst.map.at("m");
  CHECK(body.binders == 3);
  // Kept parameters appear in order: e[z1, z3], i.e. indices 2 and 0.
  CHECK(alpha_equal(body.body, Term::meta(e.name, {Term::var(2), Term::var(0)})));
  check_body_types(stlc_signature(), r, theta);

  // Eliminating everything yields a closed fresh metavariable.
  NameSupply supply2(theta.names());
  BindingResult r2 = elimination(theta, "m", {}, supply2);
  CHECK(r2.fresh.decls()[0].params.empty());
  CHECK(alpha_equal(r2.subst.map.at("m").body, Term::meta(r2.fresh.decls()[0].name, {})));

  SUBCASE("errors") {
    NameSupply sup(theta.names());
    CHECK_THROWS_AS(elimination(theta, "m", {1, 0}, sup), TypeError);
    CHECK_THROWS_AS(elimination(theta, "m", {1, 1}, sup), TypeError);
    CHECK_THROWS_AS(elimination(theta, "m", {3}, sup), TypeError);
  }
}

TEST_CASE("identification routes two metavariables through a shared head") {
  TypeExpr a = con("s"), bty = con("t"), tau = con("t");
  MetaContext theta;
  theta.add(MetaDecl{"m", {a}, tau});
  theta.add(MetaDecl{"n", {bty}, tau});
  NameSupply supply(theta.names());

  BindingResult r = identification(theta, "m", "n", supply);
  // Fresh: i : [s, t]t, m' : [s]t, n' : [t]s.
  REQUIRE(r.fresh.decls().size() == 3);
  const MetaDecl& i = r.fresh.decls()[0];
  const MetaDecl& mp = r.fresh.decls()[1];
  const MetaDecl& np = r.fresh.decls()[2];
  CHECK(i.params == std::vector<TypeExpr>{a, bty});
  CHECK(i.result == tau);
  CHECK(mp.params == std::vector<TypeExpr>{a});
  CHECK(mp.result == bty);
  CHECK(np.params == std::vector<TypeExpr>{bty});
  CHECK(np.result == a);

  // m[z] |-> i[z, m'[z]] and n[y] |-> i[n'[y], y].
  Term mexp = Term::meta(i.name, {Term::var(0), Term::meta(mp.name, {Term::var(0)})});
  Term nexp = Term::meta(i.name, {Term::meta(np.name, {Term::var(0)}), Term::var(0)});
  CHECK(alpha_equal(r.subst.map.at("m").body, mexp));
  CHECK(alpha_equal(r.subst.map.at("n").body, nexp));
  CHECK(names_of(r.subst.codomain) == std::set<std::string>{i.name, mp.name, np.name});
  check_body_types(stlc_signature(), r, theta);

  SUBCASE("nullary metavariables share a nullary head") {
    MetaContext th2;
    th2.add(MetaDecl{"m", {}, tau});
    th2.add(MetaDecl{"n", {}, tau});
    NameSupply sup(th2.names());
    BindingResult r2 = identification(th2, "m", "n", sup);
    REQUIRE(r2.fresh.decls().size() == 1);
    Term head = Term::meta(r2.fresh.decls()[0].name, {});
    CHECK(alpha_equal(r2.subst.map.at("m").body, head));
    CHECK(alpha_equal(r2.subst.map.at("n").body, head));
    // Both sides become literally identical after the binding.
    CHECK(alpha_equal(apply_meta(r2.subst, Term::meta("m", {})),
                      apply_meta(r2.subst, Term::meta("n", {}))));
  }

  SUBCASE("errors") {
    NameSupply sup(theta.names());
    CHECK_THROWS_AS(identification(theta, "m", "m", sup), TypeError);
    MetaContext bad;
    bad.add(MetaDecl{"m", {}, a});
    bad.add(MetaDecl{"n", {}, tau});
    NameSupply sup2(bad.names());
    CHECK_THROWS_AS(identification(bad, "m", "n", sup2), TypeError);
  }
}

TEST_CASE("iteration feeds an operator's result to a widened fresh head") {
  const Signature& sig = stlc_signature();
  TypeExpr s = con("s"), t = con("t");
  MetaContext theta;
  theta.add(MetaDecl{"m", {s}, t});
  NameSupply supply(theta.names());

  BindingResult r = iteration(theta, "m", sig.op("app"), {s, t}, supply);
  // m[z] |-> h[z, app(k1[z], k2[z])] with h : [s, t]t.
  REQUIRE(r.fresh.decls().size() == 3);
  const MetaDecl& h = r.fresh.decls()[0];
  const MetaDecl& k1 = r.fresh.decls()[1];
  const MetaDecl& k2 = r.fresh.decls()[2];
  CHECK(h.params == std::vector<TypeExpr>{s, t});
  CHECK(h.result == t);
  CHECK(k1.result == con("arrow", {s, t}));
  CHECK(k2.result == s);
  Term inner = Term::op("app", {s, t},
                        {ScopedTerm(0, Term::meta(k1.name, {Term::var(0)})),
                         ScopedTerm(0, Term::meta(k2.name, {Term::var(0)}))});
  CHECK(alpha_equal(r.subst.map.at("m").body, Term::meta(h.name, {Term::var(0), inner})));
  check_body_types(sig, r, theta);

  SUBCASE("a constant iterates to h[zs, c()]") {
    Signature sig2 = sig;
    OperatorDecl c{"c", {}, {}, t};
    sig2.operators["c"] = c;
    NameSupply sup(theta.names());
    BindingResult r2 = iteration(theta, "m", c, {}, sup);
    REQUIRE(r2.fresh.decls().size() == 1);
    const MetaDecl& h2 = r2.fresh.decls()[0];
    CHECK(h2.params == std::vector<TypeExpr>{s, t});
    Term expect = Term::meta(h2.name, {Term::var(0), Term::op("c", {}, {})});
    CHECK(alpha_equal(r2.subst.map.at("m").body, expect));
    check_body_types(sig2, r2, theta);
  }
}

TEST_CASE("property: binding generators maintain contexts, freshness, typing") {
  const Signature& sig = stlc_signature();
  std::vector<TypeExpr> sorts = {con("s"), con("t"), con("arrow", {con("s"), con("t")}),
                                 con("prod", {con("s"), con("s")})};
  testutil::Rng rng(20240817);
  std::uniform_int_distribution<int> nparams(0, 3);

  for (int iter = 0; iter < 200; ++iter) {
    MetaContext theta;
    int nm = 2 + (int)(rng() % 2);
    for (int i = 0; i < nm; ++i) {
      std::vector<TypeExpr> ps;
      int k = nparams(rng);
      for (int j = 0; j < k; ++j) ps.push_back(testutil::choose(rng, sorts));
      theta.add(MetaDecl{"m" + std::to_string(i), std::move(ps), testutil::choose(rng, sorts)});
    }
    std::vector<MetaDecl> decls = theta.decls();
    const MetaDecl& d = testutil::choose(rng, decls);
    NameSupply supply(theta.names());

    std::vector<BindingResult> results;
    switch (rng() % 5) {
      case 0: {  // projection, when some parameter matches the result type
        for (int i = 0; i < (int)d.params.size(); ++i)
          if (d.params[(size_t)i] == d.result) {
            results.push_back(jp_projection(theta, d.name, i));
            break;
          }
        break;
      }
      case 1: {  // imitation by any operator that can yield the result type
        for (const auto& [opname, decl] : sig.operators) {
          TypeAssignment assign;
          if (!match_type(decl.result, d.result, assign)) continue;
          std::vector<TypeExpr> inst;
          bool ok = true;
          for (const auto& v : decl.type_vars) {
            auto it = assign.find(v);
            if (it == assign.end()) {
              ok = false;
              break;
            }
            inst.push_back(it->second);
          }
          if (!ok) continue;
          results.push_back(imitation(theta, d.name, decl, inst, supply));
          break;
        }
        break;
      }
      case 2: {  // elimination of a random subset
        std::vector<int> kept;
        for (int i = 0; i < (int)d.params.size(); ++i)
          if (rng() % 2) kept.push_back(i);
        results.push_back(elimination(theta, d.name, kept, supply));
        break;
      }
      case 3: {  // identification with a partner of equal result type
        for (const auto& o : decls)
          if (o.name != d.name && o.result == d.result) {
            results.push_back(identification(theta, d.name, o.name, supply));
            break;
          }
        break;
      }
      case 4: {  // iteration over a fully-instantiable operator
        for (const auto& [opname, decl] : sig.operators) {
          if (!decl.type_vars.empty()) continue;  // none in this signature, but be safe
          results.push_back(iteration(theta, d.name, decl, {}, supply));
          break;
        }
        // All operators here are schematic; instantiate app at fixed types.
        if (results.empty())
          results.push_back(iteration(theta, d.name, sig.op("app"), {con("s"), con("t")}, supply));
        break;
      }
    }

    for (const BindingResult& r : results) {
      // Domain is the input context; codomain replaces the targets with the
      // fresh declarations; fresh names never collide with existing ones.
      CHECK(names_of(r.subst.domain) == theta.names());
      std::set<std::string> expect_cod;
      for (const auto& dd : theta.decls())
        if (!r.subst.map.count(dd.name)) expect_cod.insert(dd.name);
      for (const auto& fd : r.fresh.decls()) {
        CHECK(theta.names().count(fd.name) == 0);
        expect_cod.insert(fd.name);
      }
      CHECK(names_of(r.subst.codomain) == expect_cod);
      check_body_types(sig, r, theta);
    }
  }
}
