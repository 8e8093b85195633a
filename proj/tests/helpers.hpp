#pragma once

// Shared test utilities: corpus loading, independent oracles (named-variable
// substitution, exhaustive term enumeration, brute-force matching), and
// random generators for signatures, presentations, and problems.

#include <fstream>
#include <random>
#include <sstream>

#include "soas/soas.hpp"

namespace testutil {

using namespace soas;

inline ProblemFile load_data_file(const std::string& name) {
  std::string path = std::string(SOAS_DATA_DIR) + "/" + name;
  std::ifstream f(path);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_file(ss.str());
}

// ---------------------------------------------------------------------------
// Named-variable substitution oracle.
//
// An independent implementation of variable substitution: terms are converted
// to a named representation with globally unique binder names (so capture is
// impossible by construction and no index shifting exists), substitution is
// plain name replacement, and the result is converted back to de Bruijn form.
// ---------------------------------------------------------------------------

struct NTerm {
  enum class K { Var, Meta, Op } k = K::Var;
  std::string name;
  std::vector<TypeExpr> inst;
  std::vector<NTerm> params;                                     // meta
  std::vector<std::pair<std::vector<std::string>, NTerm>> args;  // op
};

inline NTerm to_named(const Term& t, std::vector<std::string>& scope, int& counter) {
  NTerm n;
  if (const auto* v = t.as_var()) {
    n.k = NTerm::K::Var;
    n.name = scope[scope.size() - 1 - (size_t)v->index];
    return n;
  }
  if (const auto* m = t.as_meta()) {
    n.k = NTerm::K::Meta;
    n.name = m->name;
    for (const auto& p : m->params) n.params.push_back(to_named(p, scope, counter));
    return n;
  }
  const auto* o = t.as_op();
  n.k = NTerm::K::Op;
  n.name = o->name;
  n.inst = o->inst;
  for (const auto& a : o->args) {
    std::vector<std::string> binders;
    for (int i = 0; i < a.binders; ++i) binders.push_back("v" + std::to_string(++counter));
    for (const auto& b : binders) scope.push_back(b);
    NTerm body = to_named(a.body, scope, counter);
    for (int i = 0; i < a.binders; ++i) scope.pop_back();
    n.args.emplace_back(std::move(binders), std::move(body));
  }
  return n;
}

inline NTerm nsubst(const NTerm& t, const std::map<std::string, NTerm>& repl) {
  if (t.k == NTerm::K::Var) {
    auto it = repl.find(t.name);
    return it == repl.end() ? t : it->second;
  }
  NTerm n = t;
  if (t.k == NTerm::K::Meta) {
    n.params.clear();
    for (const auto& p : t.params) n.params.push_back(nsubst(p, repl));
    return n;
  }
  n.args.clear();
  for (const auto& [binders, body] : t.args) n.args.emplace_back(binders, nsubst(body, repl));
  return n;
}

inline Term to_debruijn(const NTerm& t, std::vector<std::string>& scope) {
  if (t.k == NTerm::K::Var) {
    for (size_t i = scope.size(); i-- > 0;)
      if (scope[i] == t.name) return Term::var((int)(scope.size() - 1 - i));
    throw std::runtime_error("oracle: unbound name " + t.name);
  }
  if (t.k == NTerm::K::Meta) {
    std::vector<Term> ps;
    for (const auto& p : t.params) ps.push_back(to_debruijn(p, scope));
    return Term::meta(t.name, std::move(ps));
  }
  std::vector<ScopedTerm> as;
  for (const auto& [binders, body] : t.args) {
    for (const auto& b : binders) scope.push_back(b);
    Term db = to_debruijn(body, scope);
    for (size_t i = 0; i < binders.size(); ++i) scope.pop_back();
    as.emplace_back((int)binders.size(), db, binders);
  }
  return Term::op(t.name, t.inst, std::move(as));
}

// Oracle for subst_vars(t, values): t's innermost k free indices are replaced
// by values (index i by values[k-1-i]); indices >= k refer to the ambient
// context, which has `ambient` entries.
inline Term oracle_subst_vars(const Term& t, const std::vector<Term>& values, int ambient) {
  int counter = 0;
  std::vector<std::string> ascope;
  for (int i = 0; i < ambient; ++i) ascope.push_back("a" + std::to_string(i));
  std::vector<std::string> tscope = ascope;
  int k = (int)values.size();
  for (int i = 0; i < k; ++i) tscope.push_back("b" + std::to_string(i));
  NTerm nt = to_named(t, tscope, counter);
  std::map<std::string, NTerm> repl;
  for (int i = 0; i < k; ++i) {
    std::vector<std::string> vs = ascope;
    // b<i> sits at de Bruijn index k-1-i inside t, which receives values[i].
    repl["b" + std::to_string(i)] = to_named(values[(size_t)i], vs, counter);
  }
  NTerm res = nsubst(nt, repl);
  std::vector<std::string> out_scope = ascope;
  return to_debruijn(res, out_scope);
}

// ---------------------------------------------------------------------------
// Exhaustive term enumeration (the basis of the brute-force oracles).
// ---------------------------------------------------------------------------

inline void complete_assignment(const OperatorDecl& decl, const TypeAssignment& partial,
                                const std::vector<TypeExpr>& candidates,
                                std::vector<TypeAssignment>& out) {
  std::vector<std::string> open;
  for (const auto& v : decl.type_vars)
    if (!partial.count(v)) open.push_back(v);
  std::vector<TypeAssignment> acc{partial};
  for (const auto& v : open) {
    std::vector<TypeAssignment> next;
    for (const auto& a : acc)
      for (const auto& c : candidates) {
        TypeAssignment b = a;
        b[v] = c;
        next.push_back(std::move(b));
      }
    acc = std::move(next);
  }
  for (auto& a : acc) out.push_back(std::move(a));
}

// All well-typed terms of `type` under ctx/metas with term_size <= max_size.
// Schematic operator variables not fixed by the result type range over
// `tvar_candidates`.
inline void enumerate_terms(const Signature& sig, const MetaContext& metas, const VarContext& ctx,
                            const TypeExpr& type, int max_size,
                            const std::vector<TypeExpr>& tvar_candidates, std::vector<Term>& out) {
  if (max_size <= 0) return;
  for (int i = 0; i < (int)ctx.size(); ++i)
    if (ctx.type_of_index(i) == type) out.push_back(Term::var(i));
  for (const auto& d : metas.decls()) {
    if (!(d.result == type)) continue;
    std::vector<std::vector<Term>> param_choices{{}};
    bool feasible = true;
    int budget = max_size - 1;
    for (const auto& pt : d.params) {
      std::vector<Term> opts;
      enumerate_terms(sig, metas, ctx, pt, budget - (int)d.params.size() + 1, tvar_candidates,
                      opts);
      if (opts.empty()) {
        feasible = false;
        break;
      }
      std::vector<std::vector<Term>> next;
      for (const auto& pref : param_choices)
        for (const auto& o : opts) {
          auto p2 = pref;
          p2.push_back(o);
          next.push_back(std::move(p2));
        }
      param_choices = std::move(next);
    }
    if (!feasible) continue;
    for (const auto& ps : param_choices) {
      int sz = 1;
      for (const auto& p : ps) sz += term_size(p);
      if (sz <= max_size) out.push_back(Term::meta(d.name, ps));
    }
  }
  for (const auto& [name, decl] : sig.operators) {
    TypeAssignment partial;
    if (!match_type(decl.result, type, partial)) continue;
    std::vector<TypeAssignment> assigns;
    complete_assignment(decl, partial, tvar_candidates, assigns);
    for (const auto& assign : assigns) {
      if (assign.size() != decl.type_vars.size()) continue;
      std::vector<std::vector<ScopedTerm>> arg_choices{{}};
      bool feasible = true;
      for (const auto& ar : decl.args) {
        std::vector<TypeExpr> btypes;
        for (const auto& b : ar.binders) btypes.push_back(apply_type_assignment(b, assign));
        VarContext inner = ctx.extended(btypes);
        std::vector<Term> bodies;
        enumerate_terms(sig, metas, inner, apply_type_assignment(ar.body, assign),
                        max_size - 1 - (int)decl.args.size() + 1, tvar_candidates, bodies);
        if (bodies.empty()) {
          feasible = false;
          break;
        }
        std::vector<std::vector<ScopedTerm>> next;
        for (const auto& pref : arg_choices)
          for (const auto& b : bodies) {
            auto p2 = pref;
            p2.emplace_back((int)ar.binders.size(), b);
            next.push_back(std::move(p2));
          }
        arg_choices = std::move(next);
      }
      if (!feasible) continue;
      std::vector<TypeExpr> inst;
      for (const auto& v : decl.type_vars) inst.push_back(assign.at(v));
      for (const auto& as : arg_choices) {
        int sz = 1;
        for (const auto& a : as) sz += term_size(a.body);
        if (sz <= max_size) out.push_back(Term::op(name, inst, as));
      }
    }
  }
}

inline std::vector<Term> enumerate_terms(const Signature& sig, const MetaContext& metas,
                                         const VarContext& ctx, const TypeExpr& type,
                                         int max_size,
                                         const std::vector<TypeExpr>& tvar_candidates = {}) {
  std::vector<Term> out;
  enumerate_terms(sig, metas, ctx, type, max_size, tvar_candidates, out);
  return out;
}

// ---------------------------------------------------------------------------
// Brute-force second-order matching oracle: try every combination of bodies
// (size <= body_size) for the pattern metavariables and keep those whose
// application makes the pattern alpha-equal to the subject.
// ---------------------------------------------------------------------------

inline std::string binding_key(const std::map<std::string, ScopedTerm>& metas) {
  std::ostringstream os;
  for (const auto& [n, b] : metas) os << n << "=" << canon_term_key(b.body) << ";";
  return os.str();
}

inline std::set<std::string> oracle_match(const Signature& sig, const MetaContext& pattern_metas,
                                          const VarContext& ctx, const Term& pattern,
                                          const Term& subject, int body_size) {
  std::vector<std::string> names;
  for (const auto& d : pattern_metas.decls()) names.push_back(d.name);
  std::vector<std::vector<ScopedTerm>> body_opts;
  for (const auto& d : pattern_metas.decls()) {
    VarContext inner = ctx.extended(d.params);
    std::vector<ScopedTerm> opts;
    for (const auto& b : enumerate_terms(sig, MetaContext{}, inner, d.result, body_size))
      opts.emplace_back((int)d.params.size(), b);
    body_opts.push_back(std::move(opts));
  }
  std::set<std::string> found;
  std::vector<size_t> idx(names.size(), 0);
  for (;;) {
    MetaSubstitution s;
    s.domain = pattern_metas;
    bool ok = true;
    for (size_t i = 0; i < names.size(); ++i) {
      if (body_opts[i].empty()) {
        ok = false;
        break;
      }
      s.map[names[i]] = body_opts[i][idx[i]];
    }
    if (!ok) break;
    if (alpha_equal(apply_meta(s, pattern), subject)) found.insert(binding_key(s.map));
    size_t k = 0;
    while (k < idx.size() && ++idx[k] == body_opts[k].size()) idx[k++] = 0;
    if (k == idx.size()) break;
  }
  return found;
}

// Keys of the matcher's results on the same ground terms the oracle ranges
// over: bindings larger than body_size are dropped, and metavariables the
// matcher left unconstrained (they do not affect the match) are completed
// with every enumerable body.
inline std::set<std::string> matcher_keys(const Signature& sig, const MetaContext& pattern_metas,
                                          const VarContext& ctx, const Term& pattern,
                                          const Term& subject, int body_size) {
  std::set<std::string> keys;
  for (const auto& r : match_second_order(pattern_metas, pattern, subject, &sig, &ctx)) {
    bool small = true;
    for (const auto& [n, b] : r.metas)
      if (term_size(b.body) > body_size) small = false;
    if (!small) continue;
    std::vector<std::map<std::string, ScopedTerm>> complete{r.metas};
    for (const auto& d : pattern_metas.decls()) {
      if (r.metas.count(d.name)) continue;
      VarContext inner = ctx.extended(d.params);
      std::vector<std::map<std::string, ScopedTerm>> next;
      for (const auto& b : enumerate_terms(sig, MetaContext{}, inner, d.result, body_size))
        for (const auto& m : complete) {
          auto m2 = m;
          m2[d.name] = ScopedTerm((int)d.params.size(), b);
          next.push_back(std::move(m2));
        }
      complete = std::move(next);
    }
    for (const auto& m : complete)
      if ((int)m.size() == (int)pattern_metas.decls().size()) keys.insert(binding_key(m));
  }
  return keys;
}

// ---------------------------------------------------------------------------
// Random generators. All randomness flows through the caller's engine so runs
// are reproducible from a seed.
// ---------------------------------------------------------------------------

using Rng = std::mt19937;

inline int pick(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

template <typename T>
const T& choose(Rng& rng, const std::vector<T>& xs) {
  return xs[(size_t)pick(rng, 0, (int)xs.size() - 1)];
}

inline Signature random_signature(Rng& rng) {
  Signature sig;
  int nsorts = pick(rng, 1, 3);
  std::vector<TypeExpr> sorts;
  for (int i = 0; i < nsorts; ++i) {
    std::string n(1, (char)('a' + i));
    sig.sorts.insert(n);
    sorts.push_back(TypeExpr{TypeExpr::Kind::Con, n, {}});
  }
  int nops = pick(rng, 1, 4);
  for (int i = 0; i < nops; ++i) {
    OperatorDecl d;
    d.name = "f" + std::to_string(i);
    d.result = choose(rng, sorts);
    int nargs = pick(rng, 0, 2);
    bool binding = pick(rng, 0, 1) == 1;  // all-or-none keeps the operator non-mixed
    for (int j = 0; j < nargs; ++j) {
      ArgArity a;
      if (binding) a.binders.push_back(choose(rng, sorts));
      a.body = choose(rng, sorts);
      d.args.push_back(std::move(a));
    }
    sig.operators[d.name] = d;
  }
  return sig;
}

inline MetaContext random_metas(Rng& rng, const std::vector<TypeExpr>& sorts, int count,
                                int max_params, const std::string& prefix) {
  MetaContext m;
  for (int i = 0; i < count; ++i) {
    MetaDecl d;
    d.name = prefix + std::to_string(i);
    int np = pick(rng, 0, max_params);
    for (int j = 0; j < np; ++j) d.params.push_back(choose(rng, sorts));
    d.result = choose(rng, sorts);
    m.add(d);
  }
  return m;
}

inline std::vector<TypeExpr> sorts_of(const Signature& sig) {
  std::vector<TypeExpr> out;
  for (const auto& s : sig.sorts) out.push_back(TypeExpr{TypeExpr::Kind::Con, s, {}});
  return out;
}

inline Presentation random_presentation(Rng& rng) {
  Presentation pres;
  pres.sig = random_signature(rng);
  std::vector<TypeExpr> sorts = sorts_of(pres.sig);
  int naxioms = pick(rng, 0, 2);
  for (int i = 0; i < naxioms; ++i) {
    Axiom ax;
    ax.name = "ax" + std::to_string(i);
    ax.metas = random_metas(rng, sorts, pick(rng, 1, 2), 1, "e");
    ax.type = choose(rng, sorts);
    std::vector<Term> side_pool =
        enumerate_terms(pres.sig, ax.metas, VarContext{}, ax.type, 4);
    if (side_pool.empty()) continue;
    ax.lhs = choose(rng, side_pool);
    ax.rhs = choose(rng, side_pool);
    if (alpha_equal(ax.lhs, ax.rhs)) continue;  // skip trivially reflexive equations
    pres.axioms.push_back(std::move(ax));
  }
  return pres;
}

inline UnificationProblem random_problem(Rng& rng, const Presentation& pres, int max_side_size) {
  std::vector<TypeExpr> sorts = sorts_of(pres.sig);
  UnificationProblem P;
  P.metas = random_metas(rng, sorts, pick(rng, 1, 2), 2, "M");
  VarContext ctx;
  int nvars = pick(rng, 0, 2);
  for (int i = 0; i < nvars; ++i) ctx.push(choose(rng, sorts), "g" + std::to_string(i));
  int ncons = pick(rng, 1, 2);
  for (int i = 0; i < ncons; ++i) {
    TypeExpr ty = choose(rng, sorts);
    std::vector<Term> pool = enumerate_terms(pres.sig, P.metas, ctx, ty, max_side_size);
    if (pool.empty()) continue;
    Term lhs = choose(rng, pool);
    Term rhs = choose(rng, pool);
    P.constraints.push_back(Constraint{ctx, lhs, rhs, ty});
  }
  return P;
}

}  // namespace testutil
