#pragma once

#include <memory>
#include <variant>

#include "soas/type.hpp"

namespace soas {

class Term;

// One scoped argument of an operator: binds `binders` variables inside `body`.
// Bound variables get de Bruijn indices 0..binders-1 inside the body, index 0
// being the *last* variable of the binder list.
struct ScopedTerm;

struct VarNode {
  int index = 0;  // de Bruijn index, 0 = innermost binder
};

struct MetaNode;
struct OpNode;
struct TermNode;  // variant of the three node kinds, defined below

class Term {
 public:
  Term() = default;
  explicit Term(std::shared_ptr<const TermNode> n) : node_(std::move(n)) {}

  static Term var(int index);
  static Term meta(std::string name, std::vector<Term> params);
  static Term op(std::string name, std::vector<TypeExpr> inst, std::vector<ScopedTerm> args);

  const TermNode& node() const { return *node_; }
  bool valid() const { return node_ != nullptr; }

  const VarNode* as_var() const;
  const MetaNode* as_meta() const;
  const OpNode* as_op() const;

 private:
  std::shared_ptr<const TermNode> node_;
};

struct ScopedTerm {
  int binders = 0;
  std::vector<std::string> names;  // display hints; may be empty
  Term body;

  ScopedTerm() = default;
  ScopedTerm(int b, Term t, std::vector<std::string> ns = {})
      : binders(b), names(std::move(ns)), body(std::move(t)) {}
};

struct MetaNode {
  std::string name;
  std::vector<Term> params;
};

struct OpNode {
  std::string name;
  std::vector<TypeExpr> inst;  // instantiation of the declaration's type variables
  std::vector<ScopedTerm> args;
};

struct TermNode : std::variant<VarNode, MetaNode, OpNode> {
  using std::variant<VarNode, MetaNode, OpNode>::variant;
};

inline Term Term::var(int index) {
  return Term(std::make_shared<const TermNode>(VarNode{index}));
}
inline Term Term::meta(std::string name, std::vector<Term> params) {
  return Term(std::make_shared<const TermNode>(MetaNode{std::move(name), std::move(params)}));
}
inline Term Term::op(std::string name, std::vector<TypeExpr> inst, std::vector<ScopedTerm> args) {
  return Term(
      std::make_shared<const TermNode>(OpNode{std::move(name), std::move(inst), std::move(args)}));
}
inline const VarNode* Term::as_var() const { return std::get_if<VarNode>(node_.get()); }
inline const MetaNode* Term::as_meta() const { return std::get_if<MetaNode>(node_.get()); }
inline const OpNode* Term::as_op() const { return std::get_if<OpNode>(node_.get()); }

// Structural equality on the de Bruijn representation; display names ignored.
inline bool alpha_equal(const Term& a, const Term& b) {
  if (&a.node() == &b.node()) return true;
  if (const auto* va = a.as_var()) {
    const auto* vb = b.as_var();
    return vb && va->index == vb->index;
  }
  if (const auto* ma = a.as_meta()) {
    const auto* mb = b.as_meta();
    if (!mb || ma->name != mb->name || ma->params.size() != mb->params.size()) return false;
    for (size_t i = 0; i < ma->params.size(); ++i)
      if (!alpha_equal(ma->params[i], mb->params[i])) return false;
    return true;
  }
  const auto* oa = a.as_op();
  const auto* ob = b.as_op();
  if (!ob || oa->name != ob->name || oa->inst != ob->inst || oa->args.size() != ob->args.size())
    return false;
  for (size_t i = 0; i < oa->args.size(); ++i) {
    if (oa->args[i].binders != ob->args[i].binders) return false;
    if (!alpha_equal(oa->args[i].body, ob->args[i].body)) return false;
  }
  return true;
}

inline void collect_free_metavariables(const Term& t, std::set<std::string>& out) {
  if (const auto* m = t.as_meta()) {
    out.insert(m->name);
    for (const auto& p : m->params) collect_free_metavariables(p, out);
  } else if (const auto* o = t.as_op()) {
    for (const auto& a : o->args) collect_free_metavariables(a.body, out);
  }
}

inline std::set<std::string> free_metavariables(const Term& t) {
  std::set<std::string> s;
  collect_free_metavariables(t, s);
  return s;
}

// Number of nodes (metavariable parameters included).
inline int term_size(const Term& t) {
  if (t.as_var()) return 1;
  if (const auto* m = t.as_meta()) {
    int s = 1;
    for (const auto& p : m->params) s += term_size(p);
    return s;
  }
  const auto* o = t.as_op();
  int s = 1;
  for (const auto& a : o->args) s += term_size(a.body);
  return s;
}

// Free variable indices relative to the term's own context: index i is free
// when some occurrence sits under d binders with index i + d.
inline void collect_free_vars(const Term& t, int depth, std::set<int>& out) {
  if (const auto* v = t.as_var()) {
    if (v->index >= depth) out.insert(v->index - depth);
  } else if (const auto* m = t.as_meta()) {
    for (const auto& p : m->params) collect_free_vars(p, depth, out);
  } else if (const auto* o = t.as_op()) {
    for (const auto& a : o->args) collect_free_vars(a.body, depth + a.binders, out);
  }
}

inline std::set<int> free_vars(const Term& t) {
  std::set<int> s;
  collect_free_vars(t, 0, s);
  return s;
}

inline bool contains_meta(const Term& t, const std::string& name) {
  if (const auto* m = t.as_meta()) {
    if (m->name == name) return true;
    for (const auto& p : m->params)
      if (contains_meta(p, name)) return true;
    return false;
  }
  if (const auto* o = t.as_op()) {
    for (const auto& a : o->args)
      if (contains_meta(a.body, name)) return true;
  }
  return false;
}

// Shift free variable indices >= cutoff by `by`.
inline Term shift_term(const Term& t, int by, int cutoff = 0) {
  if (by == 0) return t;
  if (const auto* v = t.as_var()) {
    if (v->index >= cutoff) {
      int idx = v->index + by;
      if (idx < 0) throw TypeError("variable shift out of range");
      return Term::var(idx);
    }
    return t;
  }
  if (const auto* m = t.as_meta()) {
    std::vector<Term> ps;
    ps.reserve(m->params.size());
    for (const auto& p : m->params) ps.push_back(shift_term(p, by, cutoff));
    return Term::meta(m->name, std::move(ps));
  }
  const auto* o = t.as_op();
  std::vector<ScopedTerm> as;
  as.reserve(o->args.size());
  for (const auto& a : o->args)
    as.emplace_back(a.binders, shift_term(a.body, by, cutoff + a.binders), a.names);
  return Term::op(o->name, o->inst, std::move(as));
}

// A constraint s =? t : type under a universal variable context.
struct Constraint {
  VarContext ctx;
  Term lhs;
  Term rhs;
  TypeExpr type;
};

struct UnificationProblem {
  MetaContext metas;
  std::vector<Constraint> constraints;
};

}  // namespace soas
