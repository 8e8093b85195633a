#pragma once

#include "soas/subst.hpp"

namespace soas {

// Generators for the five elementary bindings. Each returns the substitution
// [target |-> shape] together with the freshly introduced metavariable
// declarations; the substitution's codomain is the input context minus the
// targets plus the fresh declarations.

struct BindingResult {
  MetaSubstitution subst;
  MetaContext fresh;
};

namespace detail {
inline void binding_contexts(const MetaContext& theta, const std::set<std::string>& removed,
                             const MetaContext& fresh, MetaSubstitution& s) {
  s.domain = theta;
  for (const auto& d : theta.decls())
    if (!removed.count(d.name)) s.codomain.add(d);
  for (const auto& d : fresh.decls()) s.codomain.add(d);
}

// z_j as seen from inside `extra` additional binders below the z-block of a
// k-binder body (j is the 0-based parameter position).
inline Term zvar(int k, int j, int extra = 0) { return Term::var(extra + (k - 1 - j)); }
}  // namespace detail

// [m[zs] |-> z_i] (0-based i); requires the i-th parameter type to equal the
// result type.
inline BindingResult jp_projection(const MetaContext& theta, const std::string& m, int i) {
  const MetaDecl& d = theta.get(m);
  if (i < 0 || i >= (int)d.params.size()) throw TypeError("projection index out of range");
  if (d.params[(size_t)i] != d.result)
    throw TypeError("projection type mismatch: parameter " + std::to_string(i) + " of " + m +
                    " has type " + type_to_string(d.params[(size_t)i]) + ", result is " +
                    type_to_string(d.result));
  BindingResult r;
  int k = (int)d.params.size();
  r.subst.map[m] = ScopedTerm(k, detail::zvar(k, i));
  detail::binding_contexts(theta, {m}, {}, r.subst);
  return r;
}

// [m[zs] |-> F(xs_1. m_1[zs, xs_1], ..., xs_n. m_n[zs, xs_n])] with fresh
// m_i : [sigmas, alphas_i]beta_i. `inst` instantiates F's schematic variables
// in declaration order; the instantiated result type must equal m's.
inline BindingResult imitation(const MetaContext& theta, const std::string& m,
                               const OperatorDecl& F, const std::vector<TypeExpr>& inst,
                               NameSupply& supply) {
  const MetaDecl& d = theta.get(m);
  if (inst.size() != F.type_vars.size())
    throw TypeError("imitation: instantiation arity mismatch for " + F.name);
  TypeAssignment assign;
  for (size_t i = 0; i < inst.size(); ++i) assign[F.type_vars[i]] = inst[i];
  if (apply_type_assignment(F.result, assign) != d.result)
    throw TypeError("imitation: result type of " + F.name + " does not match " + m);
  BindingResult r;
  int k = (int)d.params.size();
  std::vector<ScopedTerm> args;
  for (const auto& ar : F.args) {
    std::vector<TypeExpr> params = d.params;
    for (const auto& b : ar.binders) params.push_back(apply_type_assignment(b, assign));
    std::string fn = supply.fresh(m);
    r.fresh.add(MetaDecl{fn, params, apply_type_assignment(ar.body, assign)});
    int a = (int)ar.binders.size();
    std::vector<Term> occ;
    for (int j = 0; j < k; ++j) occ.push_back(detail::zvar(k, j, a));
    for (int j = 0; j < a; ++j) occ.push_back(Term::var(a - 1 - j));
    args.emplace_back(a, Term::meta(fn, std::move(occ)));
  }
  r.subst.map[m] = ScopedTerm(k, Term::op(F.name, inst, std::move(args)));
  detail::binding_contexts(theta, {m}, r.fresh, r.subst);
  return r;
}

// [m[zs] |-> e[z_{j_1}, ..., z_{j_n}]] keeping the given strictly increasing
// 0-based parameter positions; e is fresh with the projected parameter types.
inline BindingResult elimination(const MetaContext& theta, const std::string& m,
                                 const std::vector<int>& kept, NameSupply& supply) {
  const MetaDecl& d = theta.get(m);
  int k = (int)d.params.size();
  std::vector<TypeExpr> params;
  for (size_t i = 0; i < kept.size(); ++i) {
    if (kept[i] < 0 || kept[i] >= k) throw TypeError("elimination index out of range");
    if (i > 0 && kept[i] <= kept[i - 1])
      throw TypeError("elimination indices must be strictly increasing");
    params.push_back(d.params[(size_t)kept[i]]);
  }
  std::string fn = supply.fresh(m);
  BindingResult r;
  r.fresh.add(MetaDecl{fn, params, d.result});
  std::vector<Term> occ;
  for (int j : kept) occ.push_back(detail::zvar(k, j));
  r.subst.map[m] = ScopedTerm(k, Term::meta(fn, std::move(occ)));
  detail::binding_contexts(theta, {m}, r.fresh, r.subst);
  return r;
}

// m[zs] |-> i[zs, ms'[zs]], n[ys] |-> i[ns'[ys], ys] with fresh
// i : [sigmas, nus]tau, m_j' : [sigmas]nu_j, n_j' : [nus]sigma_j.
inline BindingResult identification(const MetaContext& theta, const std::string& m,
                                    const std::string& n, NameSupply& supply) {
  if (m == n) throw TypeError("identification requires distinct metavariables");
  const MetaDecl& dm = theta.get(m);
  const MetaDecl& dn = theta.get(n);
  if (dm.result != dn.result) throw TypeError("identification requires equal result types");
  int km = (int)dm.params.size(), kn = (int)dn.params.size();
  BindingResult r;
  std::vector<TypeExpr> iparams = dm.params;
  iparams.insert(iparams.end(), dn.params.begin(), dn.params.end());
  std::string iname = supply.fresh(m);
  r.fresh.add(MetaDecl{iname, iparams, dm.result});
  std::vector<std::string> mprimes, nprimes;
  for (int j = 0; j < kn; ++j) {
    std::string f = supply.fresh(m);
    r.fresh.add(MetaDecl{f, dm.params, dn.params[(size_t)j]});
    mprimes.push_back(f);
  }
  for (int j = 0; j < km; ++j) {
    std::string f = supply.fresh(n);
    r.fresh.add(MetaDecl{f, dn.params, dm.params[(size_t)j]});
    nprimes.push_back(f);
  }
  {
    // body for m, under km binders: i[z_1..z_km, m_1'[zs]..m_kn'[zs]]
    std::vector<Term> occ;
    for (int j = 0; j < km; ++j) occ.push_back(detail::zvar(km, j));
    for (int j = 0; j < kn; ++j) {
      std::vector<Term> ps;
      for (int q = 0; q < km; ++q) ps.push_back(detail::zvar(km, q));
      occ.push_back(Term::meta(mprimes[(size_t)j], std::move(ps)));
    }
    r.subst.map[m] = ScopedTerm(km, Term::meta(iname, std::move(occ)));
  }
  {
    // body for n, under kn binders: i[n_1'[ys]..n_km'[ys], y_1..y_kn]
    std::vector<Term> occ;
    for (int j = 0; j < km; ++j) {
      std::vector<Term> ps;
      for (int q = 0; q < kn; ++q) ps.push_back(detail::zvar(kn, q));
      occ.push_back(Term::meta(nprimes[(size_t)j], std::move(ps)));
    }
    for (int j = 0; j < kn; ++j) occ.push_back(detail::zvar(kn, j));
    r.subst.map[n] = ScopedTerm(kn, Term::meta(iname, std::move(occ)));
  }
  detail::binding_contexts(theta, {m, n}, r.fresh, r.subst);
  return r;
}

// [m[zs] |-> h[zs, F(xs_1. k_1[zs, xs_1], ...)]] with fresh h : [sigmas,
// gamma]tau and k_i : [sigmas, alphas_i]beta_i, where gamma is F's
// instantiated result type.
inline BindingResult iteration(const MetaContext& theta, const std::string& m,
                               const OperatorDecl& F, const std::vector<TypeExpr>& inst,
                               NameSupply& supply) {
  const MetaDecl& d = theta.get(m);
  if (inst.size() != F.type_vars.size())
    throw TypeError("iteration: instantiation arity mismatch for " + F.name);
  TypeAssignment assign;
  for (size_t i = 0; i < inst.size(); ++i) assign[F.type_vars[i]] = inst[i];
  TypeExpr gamma = apply_type_assignment(F.result, assign);
  int k = (int)d.params.size();
  BindingResult r;
  std::vector<TypeExpr> hparams = d.params;
  hparams.push_back(gamma);
  std::string hname = supply.fresh(m);
  r.fresh.add(MetaDecl{hname, hparams, d.result});
  std::vector<ScopedTerm> args;
  for (const auto& ar : F.args) {
    std::vector<TypeExpr> params = d.params;
    for (const auto& b : ar.binders) params.push_back(apply_type_assignment(b, assign));
    std::string fn = supply.fresh(m);
    r.fresh.add(MetaDecl{fn, params, apply_type_assignment(ar.body, assign)});
    int a = (int)ar.binders.size();
    std::vector<Term> occ;
    for (int j = 0; j < k; ++j) occ.push_back(detail::zvar(k, j, a));
    for (int j = 0; j < a; ++j) occ.push_back(Term::var(a - 1 - j));
    args.emplace_back(a, Term::meta(fn, std::move(occ)));
  }
  std::vector<Term> hocc;
  for (int j = 0; j < k; ++j) hocc.push_back(detail::zvar(k, j));
  hocc.push_back(Term::op(F.name, inst, std::move(args)));
  r.subst.map[m] = ScopedTerm(k, Term::meta(hname, std::move(hocc)));
  detail::binding_contexts(theta, {m}, r.fresh, r.subst);
  return r;
}

}  // namespace soas
