#pragma once

#include <algorithm>
#include <cctype>

#include "soas/typecheck.hpp"

namespace soas {

// Opens an abstracted body by plugging `values` in for its binders.
// `values` live in the context where the body is being placed;
// `ambient_shift` is the number of binders between the body's own ambient
// context and that placement context (0 when they coincide).
inline Term open_scoped(const ScopedTerm& b, const std::vector<Term>& values, int ambient_shift,
                        int depth, const Term& t) {
  int k = b.binders;
  if ((int)values.size() != k) throw TypeError("binder/value count mismatch in substitution");
  if (const auto* v = t.as_var()) {
    if (v->index < depth) return t;
    if (v->index < depth + k) return shift_term(values[(size_t)(k - 1 - (v->index - depth))], depth);
    return Term::var(v->index - k + ambient_shift);
  }
  if (const auto* m = t.as_meta()) {
    std::vector<Term> ps;
    ps.reserve(m->params.size());
    for (const auto& p : m->params) ps.push_back(open_scoped(b, values, ambient_shift, depth, p));
    return Term::meta(m->name, std::move(ps));
  }
  const auto* o = t.as_op();
  std::vector<ScopedTerm> as;
  as.reserve(o->args.size());
  for (const auto& a : o->args)
    as.emplace_back(a.binders, open_scoped(b, values, ambient_shift, depth + a.binders, a.body),
                    a.names);
  return Term::op(o->name, o->inst, std::move(as));
}

inline Term open_scoped(const ScopedTerm& b, const std::vector<Term>& values,
                        int ambient_shift = 0) {
  return open_scoped(b, values, ambient_shift, 0, b.body);
}

// Simultaneous substitution discharging the innermost |values| binders of t;
// shifting is handled internally, capture cannot occur with de Bruijn indices.
inline Term subst_vars(const Term& t, const std::vector<Term>& values) {
  return open_scoped(ScopedTerm((int)values.size(), t), values, 0);
}

// A metavariable substitution: map from metavariable names to abstracted
// bodies. Entries absent from the map act as the identity. Bodies are typed in
// the codomain metavariable context and the same ambient variable context as
// the terms the substitution is applied to, extended with the binders.
struct MetaSubstitution {
  MetaContext domain;
  MetaContext codomain;
  std::map<std::string, ScopedTerm> map;

  bool maps(const std::string& n) const { return map.count(n) > 0; }
  static MetaSubstitution identity(MetaContext ctx = {}) {
    MetaSubstitution s;
    s.domain = ctx;
    s.codomain = std::move(ctx);
    return s;
  }
};

// The recursive definition of metavariable substitution application:
// variables unchanged; a mapped metavariable occurrence m[s...] becomes the
// body with its binders replaced by the recursively substituted parameters;
// an unmapped occurrence keeps its head with substituted parameters;
// operators recurse under their binders.
inline bool contains_any_mapped(const MetaSubstitution& th, const Term& t) {
  if (t.as_var()) return false;
  if (const auto* m = t.as_meta()) {
    if (th.maps(m->name)) return true;
    for (const auto& p : m->params)
      if (contains_any_mapped(th, p)) return true;
    return false;
  }
  for (const auto& a : t.as_op()->args)
    if (contains_any_mapped(th, a.body)) return true;
  return false;
}

inline Term apply_meta_at_depth(const MetaSubstitution& th, const Term& t, int depth) {
  if (t.as_var()) return t;
  // Untouched subtrees are shared rather than rebuilt.
  if (!contains_any_mapped(th, t)) return t;
  if (const auto* m = t.as_meta()) {
    std::vector<Term> ps;
    ps.reserve(m->params.size());
    for (const auto& p : m->params) ps.push_back(apply_meta_at_depth(th, p, depth));
    auto it = th.map.find(m->name);
    if (it == th.map.end()) return Term::meta(m->name, std::move(ps));
    return open_scoped(it->second, ps, depth);
  }
  const auto* o = t.as_op();
  std::vector<ScopedTerm> as;
  as.reserve(o->args.size());
  for (const auto& a : o->args)
    as.emplace_back(a.binders, apply_meta_at_depth(th, a.body, depth + a.binders), a.names);
  return Term::op(o->name, o->inst, std::move(as));
}

inline Term apply_meta(const MetaSubstitution& th, const Term& t) {
  return apply_meta_at_depth(th, t, 0);
}

inline ScopedTerm apply_meta(const MetaSubstitution& th, const ScopedTerm& b) {
  return ScopedTerm(b.binders, apply_meta_at_depth(th, b.body, b.binders), b.names);
}

inline Constraint apply_meta(const MetaSubstitution& th, const Constraint& c) {
  return Constraint{c.ctx, apply_meta(th, c.lhs), apply_meta(th, c.rhs), c.type};
}

// In-place variant; avoids re-copying the (unchanged) variable context.
inline void apply_meta_in_place(const MetaSubstitution& th, Constraint& c) {
  c.lhs = apply_meta(th, c.lhs);
  c.rhs = apply_meta(th, c.rhs);
}

// compose(b, a) applies like "first a, then b".
inline MetaSubstitution compose(const MetaSubstitution& b, const MetaSubstitution& a) {
  MetaSubstitution r;
  r.domain = a.domain;
  r.codomain = b.codomain;
  for (const auto& [name, body] : a.map) r.map[name] = apply_meta(b, body);
  for (const auto& [name, body] : b.map)
    if (!a.maps(name)) r.map[name] = body;
  return r;
}

// Deterministic fresh-name supply. Generated names use the base name plus a
// numeric suffix and never collide with the avoid set or earlier output.
struct NameSupply {
  std::set<std::string> used;

  explicit NameSupply(std::set<std::string> avoid = {}) : used(std::move(avoid)) {}

  void avoid(const std::set<std::string>& names) { used.insert(names.begin(), names.end()); }

  std::string fresh(const std::string& base) {
    std::string stem = base;
    while (!stem.empty() && isdigit((unsigned char)stem.back())) stem.pop_back();
    if (stem.empty()) stem = "m";
    for (int i = 1;; ++i) {
      std::string cand = stem + std::to_string(i);
      if (!used.count(cand)) {
        used.insert(cand);
        return cand;
      }
    }
  }
};

// Renames the metavariables of a context injectively away from `avoid`.
struct Renaming {
  std::map<std::string, std::string> forward;
  std::map<std::string, std::string> inverse;
};

inline MetaSubstitution renaming_substitution(const MetaContext& ctx, const Renaming& ren) {
  MetaSubstitution s;
  s.domain = ctx;
  for (const auto& d : ctx.decls()) {
    auto it = ren.forward.find(d.name);
    if (it == ren.forward.end()) {
      s.codomain.add(d);
      continue;
    }
    std::vector<Term> zs;
    for (int i = (int)d.params.size() - 1; i >= 0; --i) zs.push_back(Term::var(i));
    s.map[d.name] = ScopedTerm((int)d.params.size(), Term::meta(it->second, std::move(zs)));
    s.codomain.add(MetaDecl{it->second, d.params, d.result});
  }
  return s;
}

inline Renaming freshen_context(MetaContext& ctx, NameSupply& supply) {
  Renaming ren;
  std::vector<MetaDecl> ds = ctx.decls();
  for (auto& d : ds) {
    std::string nn = supply.fresh(d.name);
    ren.forward[d.name] = nn;
    ren.inverse[nn] = d.name;
    d.name = nn;
  }
  ctx = MetaContext(std::move(ds));
  return ren;
}

// Replaces the innermost |exist| variables of a term (the existential
// context, which sits *inside* Gamma-forall in the combined context) by
// nullary metavariable occurrences. Returns the rewritten term; `fresh_names`
// receives one declaration per existential variable, innermost first.
//
// Contexts here are ordered Gamma-exists then Gamma-forall with Gamma-forall
// printed second; we adopt the convention that the existential variables are
// the *outermost* block, so indices >= |Gamma-forall| + depth are existential.
inline Term parametrise_term(const Term& t, int forall_size, int exist_size,
                             const std::vector<std::string>& hat_names, int depth = 0) {
  if (const auto* v = t.as_var()) {
    if (v->index < depth + forall_size) return t;
    int pos = v->index - depth - forall_size;  // 0 = innermost existential
    if (pos >= exist_size) throw TypeError("variable index out of scope in parametrise");
    return Term::meta(hat_names[(size_t)pos], {});
  }
  if (const auto* m = t.as_meta()) {
    std::vector<Term> ps;
    for (const auto& p : m->params)
      ps.push_back(parametrise_term(p, forall_size, exist_size, hat_names, depth));
    return Term::meta(m->name, std::move(ps));
  }
  const auto* o = t.as_op();
  std::vector<ScopedTerm> as;
  for (const auto& a : o->args)
    as.emplace_back(a.binders,
                    parametrise_term(a.body, forall_size, exist_size, hat_names, depth + a.binders),
                    a.names);
  return Term::op(o->name, o->inst, std::move(as));
}

// Parametrises a constraint whose context is (Gamma-exists, Gamma-forall):
// each existential variable x : s becomes a fresh nullary metavariable
// x^ : []s with occurrences x^[]. Derivability is preserved in both
// directions.
inline Constraint parametrise(MetaContext& metas, const VarContext& exist, Constraint c,
                              NameSupply& supply) {
  int k = (int)exist.size();
  if (k == 0) return c;
  std::vector<std::string> hat_names;  // innermost existential first
  for (int i = 0; i < k; ++i) {
    std::string base = i < (int)exist.names().size()
                           ? exist.names()[exist.names().size() - 1 - i]
                           : "x" + std::to_string(i);
    std::string nn = supply.fresh(base + "_hat");
    hat_names.push_back(nn);
    metas.add(MetaDecl{nn, {}, exist.type_of_index(i)});
  }
  c.lhs = parametrise_term(c.lhs, (int)c.ctx.size(), k, hat_names);
  c.rhs = parametrise_term(c.rhs, (int)c.ctx.size(), k, hat_names);
  return c;
}

}  // namespace soas
