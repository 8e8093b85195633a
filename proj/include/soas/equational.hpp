#pragma once

#include <deque>

#include "soas/print.hpp"
#include "soas/subst.hpp"

namespace soas {

// ---------------------------------------------------------------------------
// Axioms and presentations
// ---------------------------------------------------------------------------

struct Axiom {
  std::string name;
  std::vector<std::string> type_vars;  // schematic type variables
  MetaContext metas;                   // may mention the schematic variables
  Term lhs;
  Term rhs;
  TypeExpr type;
  bool oriented = false;  // true: use left-to-right only during search
};

struct Presentation {
  Signature sig;
  std::vector<Axiom> axioms;

  const Axiom* find_axiom(const std::string& n) const {
    for (const auto& a : axioms)
      if (a.name == n) return &a;
    return nullptr;
  }
};

// Applies a schematic-type assignment inside a term's operator instantiations.
inline Term term_apply_types(const Term& t, const TypeAssignment& a) {
  if (t.as_var()) return t;
  if (const auto* m = t.as_meta()) {
    std::vector<Term> ps;
    for (const auto& p : m->params) ps.push_back(term_apply_types(p, a));
    return Term::meta(m->name, std::move(ps));
  }
  const auto* o = t.as_op();
  std::vector<TypeExpr> inst;
  for (const auto& i : o->inst) inst.push_back(apply_type_assignment(i, a));
  std::vector<ScopedTerm> as;
  for (const auto& ar : o->args)
    as.emplace_back(ar.binders, term_apply_types(ar.body, a), ar.names);
  return Term::op(o->name, std::move(inst), std::move(as));
}

// An axiom made ready for use at a concrete type and universal context:
// each axiom metavariable m_i : [sigmas]tau_i is replaced by a fresh
// n_i : [sigmas, types(ctx)]tau_i, and each occurrence m_i[ts] becomes
// n_i[ts, xs] with xs listing every variable of the context.
struct InstantiatedAxiom {
  std::string axiom;
  TypeAssignment types;
  MetaContext fresh;       // the n_i declarations
  MetaSubstitution remap;  // axiom metavariables -> fresh occurrences
  Term lhs;                // instantiated left side, typed in ctx
  Term rhs;                // instantiated right side, typed in ctx
  TypeExpr type;
};

inline InstantiatedAxiom instantiate_axiom(const Axiom& ax, const TypeAssignment& types,
                                           const VarContext& ctx, NameSupply& supply) {
  for (const auto& v : ax.type_vars)
    if (!types.count(v))
      throw TypeError("axiom " + ax.name + ": schematic type variable " + v + " unresolved");
  InstantiatedAxiom out;
  out.axiom = ax.name;
  out.types = types;
  out.type = apply_type_assignment(ax.type, types);
  int g = (int)ctx.size();
  for (const auto& d : ax.metas.decls()) {
    std::string fresh_name = supply.fresh(d.name);
    std::vector<TypeExpr> params;
    for (const auto& p : d.params) params.push_back(apply_type_assignment(p, types));
    int k = (int)params.size();
    for (size_t i = 0; i < ctx.size(); ++i) params.push_back(ctx.types()[i]);
    MetaDecl fd{fresh_name, std::move(params), apply_type_assignment(d.result, types)};
    out.fresh.add(fd);
    // Body of the remapping entry, in context ctx extended with the k binders:
    // n_i[z_1..z_k, x_1..x_g] where x_1 is the outermost context variable.
    std::vector<Term> occ_params;
    for (int j = 0; j < k; ++j) occ_params.push_back(Term::var(k - 1 - j));
    for (int j = 0; j < g; ++j) occ_params.push_back(Term::var(k + g - 1 - j));
    out.remap.map[d.name] = ScopedTerm(k, Term::meta(fresh_name, std::move(occ_params)));
  }
  out.lhs = apply_meta(out.remap, term_apply_types(ax.lhs, types));
  out.rhs = apply_meta(out.remap, term_apply_types(ax.rhs, types));
  return out;
}

// ---------------------------------------------------------------------------
// Second-order matching
// ---------------------------------------------------------------------------

// One match candidate: metavariable bindings plus any schematic-type bindings
// collected while comparing operator instantiations.
struct MatchBindings {
  std::map<std::string, ScopedTerm> metas;
  TypeAssignment types;
};

namespace detail {

class Matcher {
 public:
  // `sig` and `ctx` (the match-base variable context) are optional; when
  // given, the matcher tracks the sorts of subject positions and rejects
  // bindings whose bodies would be ill-typed. Where a sort cannot be
  // determined the matcher stays permissive.
  Matcher(const MetaContext& pattern_metas, const Signature* sig = nullptr,
          const VarContext* ctx = nullptr)
      : pm_(pattern_metas), sig_(sig), ctx_(ctx) {}

  using Want = std::optional<TypeExpr>;

  // Matches `pattern` (over the pattern metavariable context, possibly under
  // `depth` binders entered from the top of the match) against `subject`.
  // `want` is the sort of the position both terms occupy, when known.
  std::vector<MatchBindings> match(const Term& pattern, const Term& subject, int depth,
                                   const MatchBindings& b, const Want& want = {}) const {
    if (const auto* pv = pattern.as_var()) {
      const auto* sv = subject.as_var();
      if (sv && sv->index == pv->index) return {b};
      return {};
    }
    if (const auto* po = pattern.as_op()) {
      const auto* so = subject.as_op();
      if (!so || so->name != po->name || so->args.size() != po->args.size()) return {};
      MatchBindings b2 = b;
      if (po->inst.size() != so->inst.size()) return {};
      for (size_t i = 0; i < po->inst.size(); ++i)
        if (!match_type(po->inst[i], so->inst[i], b2.types)) return {};
      std::vector<MatchBindings> acc{b2};
      for (size_t i = 0; i < po->args.size(); ++i) {
        if (po->args[i].binders != so->args[i].binders) return {};
        Want aw = op_arg_want(so->name, so->inst, i);
        std::vector<MatchBindings> next;
        for (const auto& cur : acc) {
          auto rs =
              match(po->args[i].body, so->args[i].body, depth + po->args[i].binders, cur, aw);
          next.insert(next.end(), rs.begin(), rs.end());
        }
        acc = std::move(next);
        if (acc.empty()) return {};
      }
      return acc;
    }
    const auto* pm = pattern.as_meta();
    if (!pm_.contains(pm->name)) {
      // Opaque metavariable: heads must coincide, parameters match pairwise.
      const auto* sm = subject.as_meta();
      if (!sm || sm->name != pm->name || sm->params.size() != pm->params.size()) return {};
      std::vector<MatchBindings> acc{b};
      for (size_t i = 0; i < pm->params.size(); ++i) {
        std::vector<MatchBindings> next;
        for (const auto& cur : acc) {
          auto rs = match(pm->params[i], sm->params[i], depth, cur);
          next.insert(next.end(), rs.begin(), rs.end());
        }
        acc = std::move(next);
        if (acc.empty()) return {};
      }
      return acc;
    }
    const MetaDecl& decl = pm_.get(pm->name);
    // The subject becomes this metavariable's body (up to abstraction), so its
    // sort must be the declared result sort.
    Want rw = resolve(decl.result, b.types);
    if (clash(rw, want) || clash(rw, infer_root(subject, depth))) return {};
    std::vector<Want> psorts;
    psorts.reserve(decl.params.size());
    for (const auto& p : decl.params) psorts.push_back(resolve(p, b.types));
    auto it = b.metas.find(pm->name);
    if (it != b.metas.end())
      return check_instance(it->second, pm->params, psorts, subject, depth, b);
    // Unbound: enumerate bodies by abstracting subsets of occurrences of the
    // (recursively matched) parameter images in the subject.
    int k = (int)pm->params.size();
    std::vector<MatchBindings> out;
    for (auto& [body, nb] : abstract(pm->params, psorts, subject, depth, 0, b, rw ? rw : want)) {
      MatchBindings r = nb;
      // Matching the parameters may have bound this very metavariable (it can
      // occur nested inside its own parameters); the bodies must then agree.
      auto bound = r.metas.find(pm->name);
      if (bound != r.metas.end()) {
        if (bound->second.binders != k || !alpha_equal(bound->second.body, body)) continue;
      } else {
        r.metas.emplace(pm->name, ScopedTerm(k, body));
      }
      out.push_back(std::move(r));
    }
    return out;
  }

 private:
  static bool is_concrete(const TypeExpr& t) {
    std::set<std::string> open;
    collect_type_vars(t, open);
    return open.empty();
  }
  static Want resolve(const TypeExpr& t, const TypeAssignment& a) {
    TypeExpr r = apply_type_assignment(t, a);
    if (is_concrete(r)) return r;
    return {};
  }
  static bool clash(const Want& x, const Want& y) { return x && y && !(*x == *y); }

  // Sort of operator argument i's body under the given instantiation.
  Want op_arg_want(const std::string& name, const std::vector<TypeExpr>& inst, size_t i) const {
    if (!sig_) return {};
    auto it = sig_->operators.find(name);
    if (it == sig_->operators.end()) return {};
    const OperatorDecl& d = it->second;
    if (i >= d.args.size() || d.type_vars.size() != inst.size()) return {};
    TypeAssignment a;
    for (size_t j = 0; j < inst.size(); ++j) a[d.type_vars[j]] = inst[j];
    TypeExpr r = apply_type_assignment(d.args[i].body, a);
    if (is_concrete(r)) return r;
    return {};
  }

  // Root sort of a subject subterm sitting under `depth` match binders:
  // determinable for operator heads (via the signature) and ambient variables
  // (via the base context).
  Want infer_root(const Term& t, int depth) const {
    if (const auto* o = t.as_op()) {
      if (!sig_) return {};
      auto it = sig_->operators.find(o->name);
      if (it == sig_->operators.end()) return {};
      const OperatorDecl& d = it->second;
      if (d.type_vars.size() != o->inst.size()) return {};
      TypeAssignment a;
      for (size_t j = 0; j < o->inst.size(); ++j) a[d.type_vars[j]] = o->inst[j];
      TypeExpr r = apply_type_assignment(d.result, a);
      if (is_concrete(r)) return r;
      return {};
    }
    if (const auto* v = t.as_var()) {
      if (ctx_ && v->index >= depth && v->index - depth < (int)ctx_->size())
        return ctx_->type_of_index(v->index - depth);
      return {};
    }
    return {};  // opaque metavariable: unknown
  }

  // Verifies subject == body[z := params] structurally, matching parameters
  // recursively where the body uses its abstracted variables.
  // `bdepth` counts binders entered inside the body (== inside the subject).
  std::vector<MatchBindings> check_instance(const ScopedTerm& body,
                                            const std::vector<Term>& params,
                                            const std::vector<Want>& psorts, const Term& subject,
                                            int depth, const MatchBindings& b) const {
    return check_instance_rec(body.body, body.binders, params, psorts, subject, depth, 0, b);
  }

  std::vector<MatchBindings> check_instance_rec(const Term& bt, int k,
                                                const std::vector<Term>& params,
                                                const std::vector<Want>& psorts,
                                                const Term& subject, int depth, int bdepth,
                                                const MatchBindings& b) const {
    if (const auto* bv = bt.as_var()) {
      if (bv->index >= bdepth && bv->index < bdepth + k) {
        // Abstracted slot z_j: the subject here must be (a shift of) the
        // j-th parameter's image; match the parameter against it.
        int j = k - 1 - (bv->index - bdepth);
        auto fv = free_vars(subject);
        if (!fv.empty() && *fv.begin() < bdepth) return {};
        return match(params[(size_t)j], shift_term(subject, -bdepth, bdepth), depth, b,
                     psorts[(size_t)j]);
      }
      const auto* sv = subject.as_var();
      int expect = bv->index < bdepth ? bv->index : bv->index - k;
      if (sv && sv->index == expect) return {b};
      return {};
    }
    if (const auto* bm = bt.as_meta()) {
      const auto* sm = subject.as_meta();
      if (!sm || sm->name != bm->name || sm->params.size() != bm->params.size()) return {};
      std::vector<MatchBindings> acc{b};
      for (size_t i = 0; i < bm->params.size(); ++i) {
        std::vector<MatchBindings> next;
        for (const auto& cur : acc) {
          auto rs = check_instance_rec(bm->params[i], k, params, psorts, sm->params[i], depth,
                                       bdepth, cur);
          next.insert(next.end(), rs.begin(), rs.end());
        }
        acc = std::move(next);
        if (acc.empty()) return {};
      }
      return acc;
    }
    const auto* bo = bt.as_op();
    const auto* so = subject.as_op();
    if (!so || so->name != bo->name || so->args.size() != bo->args.size() || so->inst != bo->inst)
      return {};
    std::vector<MatchBindings> acc{b};
    for (size_t i = 0; i < bo->args.size(); ++i) {
      if (bo->args[i].binders != so->args[i].binders) return {};
      std::vector<MatchBindings> next;
      for (const auto& cur : acc) {
        auto rs = check_instance_rec(bo->args[i].body, k, params, psorts, so->args[i].body, depth,
                                     bdepth + bo->args[i].binders, cur);
        next.insert(next.end(), rs.begin(), rs.end());
      }
      acc = std::move(next);
      if (acc.empty()) return {};
    }
    return acc;
  }

  // Enumerates bodies for a metavariable with the given parameters matched
  // against `subject`. `depth` = binders above the metavariable occurrence
  // (the body's ambient context is the match base, *below* those binders);
  // `sdepth` = binders entered inside the subject. Returns (body-part,
  // bindings) pairs; the body-part lives in (base, z-block, sdepth locals).
  // `want` is the sort of the position this subterm occupies, when known.
  std::vector<std::pair<Term, MatchBindings>> abstract(const std::vector<Term>& params,
                                                       const std::vector<Want>& psorts,
                                                       const Term& subject, int depth, int sdepth,
                                                       const MatchBindings& b,
                                                       const Want& want = {}) const {
    int k = (int)params.size();
    std::vector<std::pair<Term, MatchBindings>> out;
    // Option 1: abstract this whole subterm as one of the parameters. The
    // position then holds the parameter, so its sort must fit.
    auto fv = free_vars(subject);
    bool locals_clear = fv.empty() || *fv.begin() >= sdepth;
    if (locals_clear) {
      Term image = shift_term(subject, -sdepth, sdepth);
      for (int j = 0; j < k; ++j) {
        if (clash(want, psorts[(size_t)j])) continue;
        for (const auto& nb : match(params[(size_t)j], image, depth, b, psorts[(size_t)j]))
          out.emplace_back(Term::var(sdepth + (k - 1 - j)), nb);
      }
    }
    // Option 2: keep this node and recurse structurally.
    if (const auto* v = subject.as_var()) {
      int i = v->index;
      if (i < sdepth) {
        out.emplace_back(Term::var(i), b);
      } else if (i >= sdepth + depth) {
        // Ambient variable of the match base; reindex past the z-block.
        out.emplace_back(Term::var(i - depth + k), b);
      }
      // Variables bound by pattern binders above the occurrence cannot appear
      // unabstracted in the body (it would escape its context).
      return out;
    }
    if (const auto* m = subject.as_meta()) {
      std::vector<std::pair<std::vector<Term>, MatchBindings>> acc{{{}, b}};
      for (const auto& p : m->params) {
        std::vector<std::pair<std::vector<Term>, MatchBindings>> next;
        for (const auto& [built, cur] : acc) {
          for (auto& [part, nb] : abstract(params, psorts, p, depth, sdepth, cur)) {
            auto nbuilt = built;
            nbuilt.push_back(part);
            next.emplace_back(std::move(nbuilt), nb);
          }
        }
        acc = std::move(next);
        if (acc.empty()) break;
      }
      for (auto& [built, nb] : acc) out.emplace_back(Term::meta(m->name, built), nb);
      return out;
    }
    const auto* o = subject.as_op();
    std::vector<std::pair<std::vector<ScopedTerm>, MatchBindings>> acc{{{}, b}};
    for (size_t ai = 0; ai < o->args.size(); ++ai) {
      const auto& a = o->args[ai];
      Want aw = op_arg_want(o->name, o->inst, ai);
      std::vector<std::pair<std::vector<ScopedTerm>, MatchBindings>> next;
      for (const auto& [built, cur] : acc) {
        for (auto& [part, nb] : abstract(params, psorts, a.body, depth, sdepth + a.binders, cur, aw)) {
          auto nbuilt = built;
          nbuilt.emplace_back(a.binders, part, a.names);
          next.emplace_back(std::move(nbuilt), nb);
        }
      }
      acc = std::move(next);
      if (acc.empty()) break;
    }
    for (auto& [built, nb] : acc) out.emplace_back(Term::op(o->name, o->inst, built), nb);
    return out;
  }

  const MetaContext& pm_;
  const Signature* sig_;
  const VarContext* ctx_;
};

}  // namespace detail

// All substitutions s (over the pattern's metavariable context) with
// apply_meta(s, pattern) alpha-equal to subject. Metavariables of the subject
// that are not in `pattern_metas` are treated as opaque constants. Schematic
// type variables occurring in the pattern's operator instantiations are
// matched first-order and returned alongside.
inline std::vector<MatchBindings> match_second_order(const MetaContext& pattern_metas,
                                                     const Term& pattern, const Term& subject,
                                                     const Signature* sig = nullptr,
                                                     const VarContext* ctx = nullptr) {
  detail::Matcher m(pattern_metas, sig, ctx);
  auto raw = m.match(pattern, subject, 0, MatchBindings{});
  // Deduplicate: different abstraction orders can build identical bindings.
  std::vector<MatchBindings> out;
  std::set<std::string> seen;
  for (auto& b : raw) {
    std::ostringstream key;
    for (const auto& [n, body] : b.metas) {
      key << n << "/" << body.binders << ":";
      canon_term(body.body, key);
      key << ";";
    }
    for (const auto& [v, t] : b.types) {
      key << v << "=";
      canon_type(t, key);
      key << ";";
    }
    if (seen.insert(key.str()).second) out.push_back(std::move(b));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rewriting and certificates
// ---------------------------------------------------------------------------

enum class RewriteDir { LeftToRight, RightToLeft };

struct RewriteStep {
  std::string axiom;
  RewriteDir dir = RewriteDir::LeftToRight;
  std::vector<int> path;  // child indices from the root to the redex
  MetaSubstitution inst;  // instantiation of the axiom metavariables
  TypeAssignment types;   // instantiation of the axiom's schematic type vars
  Term before;            // whole term before the step
  Term after;             // whole term after the step
};

struct EqualityCertificate {
  Term start;
  std::vector<RewriteStep> steps;
  Term end;
};

inline const Term* subterm_at(const Term& t, const std::vector<int>& path, size_t from = 0) {
  if (from == path.size()) return &t;
  int i = path[from];
  if (const auto* m = t.as_meta()) {
    if (i < 0 || i >= (int)m->params.size()) return nullptr;
    return subterm_at(m->params[(size_t)i], path, from + 1);
  }
  if (const auto* o = t.as_op()) {
    if (i < 0 || i >= (int)o->args.size()) return nullptr;
    return subterm_at(o->args[(size_t)i].body, path, from + 1);
  }
  return nullptr;
}

inline Term replace_at(const Term& t, const std::vector<int>& path, const Term& repl,
                       size_t from = 0) {
  if (from == path.size()) return repl;
  int i = path[from];
  if (const auto* m = t.as_meta()) {
    if (i < 0 || i >= (int)m->params.size()) throw TypeError("bad path in replace_at");
    std::vector<Term> ps = m->params;
    ps[(size_t)i] = replace_at(ps[(size_t)i], path, repl, from + 1);
    return Term::meta(m->name, std::move(ps));
  }
  if (const auto* o = t.as_op()) {
    if (i < 0 || i >= (int)o->args.size()) throw TypeError("bad path in replace_at");
    std::vector<ScopedTerm> as = o->args;
    as[(size_t)i].body = replace_at(as[(size_t)i].body, path, repl, from + 1);
    return Term::op(o->name, o->inst, std::move(as));
  }
  throw TypeError("bad path in replace_at");
}

namespace detail {
inline void collect_type_vars_of_term(const Term& t, std::set<std::string>& out);

inline void rewrite_at_paths(const Presentation& E, const Term& root, const Term& t,
                             std::vector<int>& path, std::vector<RewriteStep>& out) {
  for (const auto& ax : E.axioms) {
    int ndirs = ax.oriented ? 1 : 2;
    for (int d = 0; d < ndirs; ++d) {
      const Term& src = d == 0 ? ax.lhs : ax.rhs;
      const Term& tgt = d == 0 ? ax.rhs : ax.lhs;
      // A step is generable only when the target's metavariables are all
      // determined by matching the source.
      auto src_ms = free_metavariables(src);
      bool covered = true;
      for (const auto& mname : free_metavariables(tgt))
        if (!src_ms.count(mname)) {
          covered = false;
          break;
        }
      if (!covered) continue;
      for (auto& b : match_second_order(ax.metas, src, t, &E.sig)) {
        // Every schematic type variable used by the target must be pinned.
        bool ok = true;
        std::set<std::string> tvs;
        for (const auto& v : ax.type_vars) tvs.insert(v);
        std::set<std::string> needed;
        collect_type_vars_of_term(tgt, needed);
        for (const auto& v : needed)
          if (tvs.count(v) && !b.types.count(v)) {
            ok = false;
            break;
          }
        if (!ok) continue;
        MetaSubstitution inst;
        inst.map = b.metas;
        Term repl = apply_meta(inst, term_apply_types(tgt, b.types));
        RewriteStep st;
        st.axiom = ax.name;
        st.dir = d == 0 ? RewriteDir::LeftToRight : RewriteDir::RightToLeft;
        st.path = path;
        st.inst = inst;
        st.types = b.types;
        st.before = root;
        st.after = replace_at(root, path, repl);
        out.push_back(std::move(st));
      }
    }
  }
  if (const auto* m = t.as_meta()) {
    for (size_t i = 0; i < m->params.size(); ++i) {
      path.push_back((int)i);
      rewrite_at_paths(E, root, m->params[i], path, out);
      path.pop_back();
    }
  } else if (const auto* o = t.as_op()) {
    for (size_t i = 0; i < o->args.size(); ++i) {
      path.push_back((int)i);
      rewrite_at_paths(E, root, o->args[i].body, path, out);
      path.pop_back();
    }
  }
}

inline void collect_type_vars_of_term(const Term& t, std::set<std::string>& out) {
  if (const auto* m = t.as_meta()) {
    for (const auto& p : m->params) collect_type_vars_of_term(p, out);
  } else if (const auto* o = t.as_op()) {
    for (const auto& i : o->inst) collect_type_vars(i, out);
    for (const auto& a : o->args) collect_type_vars_of_term(a.body, out);
  }
}
}  // namespace detail

// All single-step rewrites of t at every path, per the three rewriting rules:
// an axiom instance at the focus, congruence under metavariable parameters,
// and congruence under operator scopes. Oriented axioms rewrite left-to-right
// only; bidirectional axioms produce both directions.
inline std::vector<RewriteStep> rewrite_once(const Presentation& E, const Term& t) {
  std::vector<RewriteStep> out;
  std::vector<int> path;
  detail::rewrite_at_paths(E, t, t, path, out);
  return out;
}

// Independent replay of a single step (used by the certificate checker).
inline bool replay_step(const Presentation& E, const RewriteStep& st) {
  const Axiom* ax = E.find_axiom(st.axiom);
  if (!ax) return false;
  const Term* redex = subterm_at(st.before, st.path);
  if (!redex) return false;
  const Term& src = st.dir == RewriteDir::LeftToRight ? ax->lhs : ax->rhs;
  const Term& tgt = st.dir == RewriteDir::LeftToRight ? ax->rhs : ax->lhs;
  Term src_i = apply_meta(st.inst, term_apply_types(src, st.types));
  if (!alpha_equal(src_i, *redex)) return false;
  Term tgt_i = apply_meta(st.inst, term_apply_types(tgt, st.types));
  Term expect;
  try {
    expect = replace_at(st.before, st.path, tgt_i);
  } catch (const TypeError&) {
    return false;
  }
  return alpha_equal(expect, st.after);
}

inline bool check_certificate(const Presentation& E, const EqualityCertificate& cert) {
  const Term* cur = &cert.start;
  for (const auto& st : cert.steps) {
    if (!alpha_equal(*cur, st.before)) return false;
    if (!replay_step(E, st)) return false;
    cur = &st.after;
  }
  return alpha_equal(*cur, cert.end);
}

// Human-readable chain: one numbered line per step with the axiom name,
// direction, redex path, and the resulting term.
inline std::string certificate_to_string(const EqualityCertificate& cert,
                                         const VarContext& ctx = {}) {
  std::ostringstream os;
  os << "  " << term_to_string(cert.start, ctx) << "\n";
  int n = 1;
  for (const auto& st : cert.steps) {
    os << "  " << n++ << ". " << st.axiom
       << (st.dir == RewriteDir::LeftToRight ? " ->" : " <-") << " at [";
    for (size_t i = 0; i < st.path.size(); ++i) os << (i ? "," : "") << st.path[i];
    os << "]: " << term_to_string(st.after, ctx) << "\n";
  }
  return os.str();
}

// Single axiom instances at the root carrying `from` to `to`, with the
// instantiation determined by matching the axiom's source against `from` and
// its target against `to` and merging the two binding sets. This covers
// axioms with metavariables occurring on only one side, which position-wise
// rewriting must skip because the step's result is underdetermined.
inline std::vector<RewriteStep> root_bridge_steps(const Presentation& E, const Term& from,
                                                  const Term& to) {
  std::vector<RewriteStep> out;
  for (const auto& ax : E.axioms) {
    int ndirs = ax.oriented ? 1 : 2;
    for (int d = 0; d < ndirs; ++d) {
      const Term& src = d == 0 ? ax.lhs : ax.rhs;
      const Term& tgt = d == 0 ? ax.rhs : ax.lhs;
      bool found = false;
      for (auto& bs : match_second_order(ax.metas, src, from, &E.sig)) {
        if (found) break;
        for (auto& bt : match_second_order(ax.metas, tgt, to, &E.sig)) {
          bool ok = true;
          for (const auto& [n, body] : bt.metas) {
            auto it = bs.metas.find(n);
            if (it != bs.metas.end() && (it->second.binders != body.binders ||
                                         !alpha_equal(it->second.body, body.body))) {
              ok = false;
              break;
            }
          }
          if (ok)
            for (const auto& [v, ty] : bt.types) {
              auto it = bs.types.find(v);
              if (it != bs.types.end() && !(it->second == ty)) {
                ok = false;
                break;
              }
            }
          if (!ok) continue;
          RewriteStep st;
          st.axiom = ax.name;
          st.dir = d == 0 ? RewriteDir::LeftToRight : RewriteDir::RightToLeft;
          st.inst.map = bs.metas;
          st.inst.map.insert(bt.metas.begin(), bt.metas.end());
          st.types = bs.types;
          st.types.insert(bt.types.begin(), bt.types.end());
          st.before = from;
          st.after = to;
          if (!replay_step(E, st)) continue;
          out.push_back(std::move(st));
          found = true;  // one witness per axiom direction suffices
          break;
        }
      }
    }
  }
  return out;
}

// Two-step chains from `from` to `to` through a common "hub" instance of one
// axiom side. Needed when an unoriented axiom has metavariables on only one
// side (in the extreme, a bare metavariable side equates all terms): the hub
// keeps those metavariables as shared fresh opaque metavariables, so neither
// endpoint has to determine them.
inline std::optional<std::pair<RewriteStep, RewriteStep>> hub_bridge_steps(const Presentation& E,
                                                                           const Term& from,
                                                                           const Term& to) {
  std::set<std::string> used;
  collect_free_metavariables(from, used);
  collect_free_metavariables(to, used);
  for (const auto& ax : E.axioms) {
    if (ax.oriented) continue;  // the two steps would need both directions
    for (int h = 0; h < 2; ++h) {
      const Term& hub = h == 0 ? ax.lhs : ax.rhs;
      const Term& other = h == 0 ? ax.rhs : ax.lhs;
      auto other_ms = free_metavariables(other);
      // Fresh stand-ins for hub-only metavariables, shared by both steps.
      MetaSubstitution fresh;
      int counter = 0;
      for (const auto& mname : free_metavariables(hub)) {
        if (other_ms.count(mname)) continue;
        std::string fname;
        do {
          fname = "w" + std::to_string(counter++);
        } while (used.count(fname));
        used.insert(fname);
        const MetaDecl& d = ax.metas.get(mname);
        std::vector<Term> params;
        for (int i = (int)d.params.size() - 1; i >= 0; --i) params.push_back(Term::var(i));
        fresh.map[mname] = ScopedTerm((int)d.params.size(), Term::meta(fname, params));
      }
      for (auto& b1 : match_second_order(ax.metas, other, from, &E.sig)) {
        for (auto& b2 : match_second_order(ax.metas, other, to, &E.sig)) {
          auto build = [&](const MatchBindings& b, RewriteDir dir, const Term& src_t,
                           const Term& tgt_t) -> std::optional<RewriteStep> {
            RewriteStep st;
            st.axiom = ax.name;
            st.dir = dir;
            st.inst.map = b.metas;
            st.inst.map.insert(fresh.map.begin(), fresh.map.end());
            st.types = b.types;
            st.before = src_t;
            st.after = tgt_t;
            if (!replay_step(E, st)) return std::nullopt;
            return st;
          };
          Term hub1 = apply_meta([&] {
            MetaSubstitution m;
            m.map = b1.metas;
            m.map.insert(fresh.map.begin(), fresh.map.end());
            return m;
          }(), term_apply_types(hub, b1.types));
          // step 1: from (an `other` instance) to the hub
          RewriteDir d1 = h == 0 ? RewriteDir::RightToLeft : RewriteDir::LeftToRight;
          RewriteDir d2 = h == 0 ? RewriteDir::LeftToRight : RewriteDir::RightToLeft;
          auto s1 = build(b1, d1, from, hub1);
          if (!s1) continue;
          auto s2 = build(b2, d2, hub1, to);
          if (!s2) continue;
          return std::make_pair(std::move(*s1), std::move(*s2));
        }
      }
    }
  }
  return std::nullopt;
}

inline RewriteStep reverse_step(const RewriteStep& st) {
  RewriteStep r = st;
  r.dir = st.dir == RewriteDir::LeftToRight ? RewriteDir::RightToLeft : RewriteDir::LeftToRight;
  r.before = st.after;
  r.after = st.before;
  return r;
}

inline EqualityCertificate reverse_certificate(const EqualityCertificate& c) {
  EqualityCertificate r;
  r.start = c.end;
  r.end = c.start;
  for (auto it = c.steps.rbegin(); it != c.steps.rend(); ++it) r.steps.push_back(reverse_step(*it));
  return r;
}

struct EqualBudget {
  int max_steps = 8;      // maximum certificate length
  int max_visited = 50000;
};

// Bounded bidirectional breadth-first search for a rewrite chain s <->* t.
// Returns a minimal-length certificate if one is found within the budget;
// absence of a certificate is *not* a disproof.
inline std::optional<EqualityCertificate> equal_modulo(const Presentation& E, const Term& s,
                                                       const Term& t, EqualBudget budget = {}) {
  if (alpha_equal(s, t)) return EqualityCertificate{s, {}, t};
  struct Entry {
    Term term;
    std::vector<RewriteStep> chain;  // from the respective endpoint
  };
  // Two frontiers; `seen` maps canonical form -> index into entries.
  std::vector<Entry> fwd{{s, {}}}, bwd{{t, {}}};
  std::map<std::string, size_t> fseen{{canon_term_key(s), 0}}, bseen{{canon_term_key(t), 0}};
  size_t fhead = 0, bhead = 0;
  int fdepth = 0, bdepth = 0;
  int visited = 0;
  auto join = [&](const std::vector<RewriteStep>& fchain,
                  const std::vector<RewriteStep>& bchain) {
    EqualityCertificate c;
    c.start = s;
    c.end = t;
    c.steps = fchain;
    for (auto it = bchain.rbegin(); it != bchain.rend(); ++it) c.steps.push_back(reverse_step(*it));
    return c;
  };
  while (fdepth + bdepth < budget.max_steps && visited < budget.max_visited) {
    bool expand_fwd = fdepth <= bdepth ? fhead < fwd.size() : bhead >= bwd.size();
    auto& layer = expand_fwd ? fwd : bwd;
    auto& head = expand_fwd ? fhead : bhead;
    auto& seen = expand_fwd ? fseen : bseen;
    auto& other_seen = expand_fwd ? bseen : fseen;
    auto& other = expand_fwd ? bwd : fwd;
    size_t layer_end = layer.size();
    if (head >= layer_end) break;  // both frontiers exhausted
    for (size_t i = head; i < layer_end && visited < budget.max_visited; ++i) {
      // A one-sided axiom may bridge this frontier term straight to the
      // opposite endpoint even though position-wise rewriting cannot fire it.
      for (auto& st : root_bridge_steps(E, layer[i].term, expand_fwd ? t : s)) {
        std::vector<RewriteStep> chain = layer[i].chain;
        chain.push_back(st);
        return expand_fwd ? join(chain, {}) : join({}, chain);
      }
      if ((int)layer[i].chain.size() + 2 <= budget.max_steps) {
        if (auto hb = hub_bridge_steps(E, layer[i].term, expand_fwd ? t : s)) {
          std::vector<RewriteStep> chain = layer[i].chain;
          chain.push_back(hb->first);
          chain.push_back(hb->second);
          return expand_fwd ? join(chain, {}) : join({}, chain);
        }
      }
      for (auto& st : rewrite_once(E, layer[i].term)) {
        ++visited;
        std::string key = canon_term_key(st.after);
        if (seen.count(key)) continue;
        Entry e{st.after, layer[i].chain};
        e.chain.push_back(st);
        auto hit = other_seen.find(key);
        if (hit != other_seen.end()) {
          const auto& oe = other[hit->second];
          return expand_fwd ? join(e.chain, oe.chain) : join(oe.chain, e.chain);
        }
        seen.emplace(std::move(key), layer.size());
        layer.push_back(std::move(e));
      }
    }
    head = layer_end;
    (expand_fwd ? fdepth : bdepth)++;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Solved forms
// ---------------------------------------------------------------------------

struct SolvedFormDiagnosis {
  bool solved = false;
  std::vector<std::string> reasons;  // one entry per failing constraint
};

// Is this single constraint of the shape m[zs] =? t with distinct variable
// parameters, t scoped in exactly those variables, and m not in t?
inline bool constraint_solved_shape(const Constraint& c, std::string* why = nullptr) {
  const auto* m = c.lhs.as_meta();
  if (!m) {
    if (why) *why = "left side is not a metavariable occurrence";
    return false;
  }
  std::set<int> zs;
  for (const auto& p : m->params) {
    const auto* v = p.as_var();
    if (!v) {
      if (why) *why = "parameter of " + m->name + " is not a variable";
      return false;
    }
    if (!zs.insert(v->index).second) {
      if (why) *why = "parameters of " + m->name + " are not distinct";
      return false;
    }
  }
  if (contains_meta(c.rhs, m->name)) {
    if (why) *why = m->name + " occurs on the right side";
    return false;
  }
  for (int fv : free_vars(c.rhs)) {
    if (!zs.count(fv)) {
      if (why) *why = "right side uses a variable outside the parameters of " + m->name;
      return false;
    }
  }
  return true;
}

inline SolvedFormDiagnosis solved_form_check(const UnificationProblem& P) {
  SolvedFormDiagnosis d;
  d.solved = true;
  std::set<std::string> heads;
  for (const auto& c : P.constraints) {
    std::string why;
    if (!constraint_solved_shape(c, &why)) {
      d.solved = false;
      d.reasons.push_back(why);
      continue;
    }
    const auto* m = c.lhs.as_meta();
    if (!heads.insert(m->name).second) {
      d.solved = false;
      d.reasons.push_back("metavariable " + m->name + " heads more than one constraint");
      continue;
    }
    d.reasons.push_back("");
  }
  return d;
}

struct NotSolvedForm : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
// Rewrites t (typed in the constraint context) into the body context of the
// solved-form unifier entry: variable with index param_index[j] becomes binder
// j of the k-binder body.
inline Term into_body(const Term& t, const std::vector<int>& param_indices, int depth) {
  int k = (int)param_indices.size();
  if (const auto* v = t.as_var()) {
    if (v->index < depth) return t;
    for (int j = 0; j < k; ++j)
      if (param_indices[(size_t)j] == v->index - depth)
        return Term::var(depth + (k - 1 - j));
    throw NotSolvedForm("right side escapes the parameter variables");
  }
  if (const auto* m = t.as_meta()) {
    std::vector<Term> ps;
    for (const auto& p : m->params) ps.push_back(into_body(p, param_indices, depth));
    return Term::meta(m->name, std::move(ps));
  }
  const auto* o = t.as_op();
  std::vector<ScopedTerm> as;
  for (const auto& a : o->args)
    as.emplace_back(a.binders, into_body(a.body, param_indices, depth + a.binders), a.names);
  return Term::op(o->name, o->inst, std::move(as));
}
}  // namespace detail

// The immediate unifier xi_S of a solved-form problem: [m_i[zs_i] |-> t_i].
inline MetaSubstitution solved_form_unifier(const UnificationProblem& P) {
  auto diag = solved_form_check(P);
  if (!diag.solved) {
    std::string msg = "problem is not in solved form";
    for (const auto& r : diag.reasons)
      if (!r.empty()) msg += "; " + r;
    throw NotSolvedForm(msg);
  }
  MetaSubstitution xi;
  xi.domain = P.metas;
  for (const auto& c : P.constraints) {
    const auto* m = c.lhs.as_meta();
    std::vector<int> idx;
    for (const auto& p : c.lhs.as_meta()->params) idx.push_back(p.as_var()->index);
    xi.map[m->name] = ScopedTerm((int)idx.size(), detail::into_body(c.rhs, idx, 0));
  }
  for (const auto& d : P.metas.decls())
    if (!xi.map.count(d.name)) xi.codomain.add(d);
  return xi;
}

}  // namespace soas
