#pragma once

#include <algorithm>
#include <optional>

#include "soas/term.hpp"

namespace soas {

// Typechecking per the three term-formation rules: variables, metavariable
// occurrences (parameters checked at their declared types), and operator
// applications (arguments checked under the extended context).
//
// Operator nodes may arrive without their schematic-variable instantiation
// (e.g. straight from the parser). Checking infers the instantiation by
// first-order matching of the declared arity against the expected result type
// and the argument types, and records it in the returned node. `tvars` names
// schematic type variables that are allowed to appear as opaque types (used
// when checking axiom sides); for problems it is empty.
class Typechecker {
 public:
  Typechecker(const Signature& sig, const MetaContext& metas,
              const std::set<std::string>& tvars = {})
      : sig_(sig), metas_(metas), tvars_(tvars) {}

  // Check t against expected type; returns the elaborated term.
  Term check(const VarContext& ctx, const Term& t, const TypeExpr& expected,
             const std::string& path = "") const {
    if (const auto* v = t.as_var()) {
      if (v->index < 0 || v->index >= (int)ctx.size())
        throw TypeError(where(path) + "variable index out of scope");
      const TypeExpr& actual = ctx.type_of_index(v->index);
      if (actual != expected)
        throw TypeError(where(path) + "variable has type " + type_to_string(actual) +
                        " but " + type_to_string(expected) + " was expected");
      return t;
    }
    if (const auto* m = t.as_meta()) {
      const MetaDecl& d = metas_.get(m->name);
      if (d.params.size() != m->params.size())
        throw TypeError(where(path) + "metavariable " + m->name + " expects " +
                        std::to_string(d.params.size()) + " parameters, got " +
                        std::to_string(m->params.size()));
      if (d.result != expected)
        throw TypeError(where(path) + "metavariable " + m->name + " has type " +
                        type_to_string(d.result) + " but " + type_to_string(expected) +
                        " was expected");
      std::vector<Term> ps;
      ps.reserve(m->params.size());
      for (size_t i = 0; i < m->params.size(); ++i)
        ps.push_back(check(ctx, m->params[i], d.params[i], path + "." + std::to_string(i)));
      return Term::meta(m->name, std::move(ps));
    }
    const auto* o = t.as_op();
    const OperatorDecl& decl = sig_.op(o->name);
    if (decl.args.size() != o->args.size())
      throw TypeError(where(path) + "operator " + o->name + " expects " +
                      std::to_string(decl.args.size()) + " arguments, got " +
                      std::to_string(o->args.size()));
    TypeAssignment assign;
    if (!o->inst.empty()) {
      // Already elaborated: verify the recorded instantiation instead.
      if (o->inst.size() != decl.type_vars.size())
        throw TypeError(where(path) + "operator " + o->name + " instantiation arity mismatch");
      for (size_t i = 0; i < o->inst.size(); ++i) assign[decl.type_vars[i]] = o->inst[i];
      TypeExpr res = apply_type_assignment(decl.result, assign);
      if (res != expected)
        throw TypeError(where(path) + "operator " + o->name + " yields " + type_to_string(res) +
                        " but " + type_to_string(expected) + " was expected");
    } else {
      if (!match_type(decl.result, expected, assign))
        throw TypeError(where(path) + "operator " + o->name + " cannot yield type " +
                        type_to_string(expected));
    }
    return elaborate_op(ctx, *o, decl, assign, path);
  }

  // Infer the type of t (used for arguments whose expected type is not yet
  // pinned down by the schematic-variable matching).
  std::pair<Term, TypeExpr> infer(const VarContext& ctx, const Term& t,
                                  const std::string& path = "") const {
    if (const auto* v = t.as_var()) {
      if (v->index < 0 || v->index >= (int)ctx.size())
        throw TypeError(where(path) + "variable index out of scope");
      return {t, ctx.type_of_index(v->index)};
    }
    if (t.as_meta()) {
      const MetaDecl& d = metas_.get(t.as_meta()->name);
      return {check(ctx, t, d.result, path), d.result};
    }
    const auto* o = t.as_op();
    const OperatorDecl& decl = sig_.op(o->name);
    if (decl.args.size() != o->args.size())
      throw TypeError(where(path) + "operator " + o->name + " expects " +
                      std::to_string(decl.args.size()) + " arguments, got " +
                      std::to_string(o->args.size()));
    TypeAssignment assign;
    if (!o->inst.empty()) {
      if (o->inst.size() != decl.type_vars.size())
        throw TypeError(where(path) + "operator " + o->name + " instantiation arity mismatch");
      for (size_t i = 0; i < o->inst.size(); ++i) assign[decl.type_vars[i]] = o->inst[i];
    }
    Term r = elaborate_op(ctx, *o, decl, assign, path);
    // elaborate_op refines `assign` with anything learnt from the arguments,
    // so the result type is fully instantiated even when inst was absent.
    return {r, apply_type_assignment(decl.result, assign)};
  }

 private:
  static std::string where(const std::string& path) {
    return path.empty() ? "" : "at " + path + ": ";
  }

  bool resolved(const TypeExpr& t, const TypeAssignment& assign,
                const std::vector<std::string>& decl_tvars) const {
    // Fully determined once every declaration-schematic variable in it is assigned.
    if (t.kind == TypeExpr::Kind::Var) {
      // A variable may be a declaration tvar (needs assignment) or an ambient
      // axiom tvar (opaque, treated as resolved).
      for (const auto& v : decl_tvars)
        if (v == t.name) return assign.count(t.name) > 0;
      return true;
    }
    for (const auto& a : t.args)
      if (!resolved(a, assign, decl_tvars)) return false;
    return true;
  }

  Term elaborate_op(const VarContext& ctx, const OpNode& o, const OperatorDecl& decl,
                    TypeAssignment& assign, const std::string& path) const {
    std::vector<ScopedTerm> out(o.args.size());
    std::vector<bool> done(o.args.size(), false);
    size_t remaining = o.args.size();
    std::string deferred;
    bool progress = true;
    while (remaining > 0 && progress) {
      progress = false;
      deferred.clear();
      for (size_t i = 0; i < o.args.size(); ++i) {
        if (done[i]) continue;
        const ArgArity& ar = decl.args[i];
        if ((int)ar.binders.size() != o.args[i].binders)
          throw TypeError(where(path) + "operator " + o.name + " argument " + std::to_string(i) +
                          " binder count mismatch");
        if (!std::all_of(ar.binders.begin(), ar.binders.end(), [&](const TypeExpr& b) {
              return resolved(b, assign, decl.type_vars);
            }))
          continue;  // cannot extend the context yet
        std::vector<TypeExpr> btypes;
        for (const auto& b : ar.binders) btypes.push_back(apply_type_assignment(b, assign));
        VarContext inner = ctx.extended(btypes, o.args[i].names);
        Term body;
        if (resolved(ar.body, assign, decl.type_vars)) {
          body = check(inner, o.args[i].body, apply_type_assignment(ar.body, assign),
                       path + "." + std::to_string(i));
        } else {
          // The body type still has undetermined schematic variables; try to
          // pin them by inference. Failure may just mean another argument has
          // to be elaborated first, so defer the error until the loop stalls.
          std::pair<Term, TypeExpr> inf;
          try {
            inf = infer(inner, o.args[i].body, path + "." + std::to_string(i));
          } catch (const TypeError& e) {
            if (deferred.empty()) deferred = e.what();
            continue;
          }
          TypeAssignment trial = assign;
          if (!match_type(apply_type_assignment(ar.body, assign), inf.second, trial))
            throw TypeError(where(path) + "operator " + o.name + " argument " +
                            std::to_string(i) + " has type " + type_to_string(inf.second) +
                            " incompatible with declared " + type_to_string(ar.body));
          assign = std::move(trial);
          body = inf.first;
        }
        out[i] = ScopedTerm(o.args[i].binders, body, o.args[i].names);
        done[i] = true;
        --remaining;
        progress = true;
      }
    }
    if (remaining > 0) {
      if (!deferred.empty()) throw TypeError(deferred);
      throw TypeError(where(path) + "ambiguous schematic instantiation for operator " + o.name);
    }
    std::vector<TypeExpr> inst;
    inst.reserve(decl.type_vars.size());
    for (const auto& v : decl.type_vars) {
      auto it = assign.find(v);
      if (it == assign.end())
        throw TypeError(where(path) + "ambiguous schematic instantiation for operator " + o.name +
                        " (variable " + v + " undetermined)");
      inst.push_back(it->second);
    }
    return Term::op(o.name, std::move(inst), std::move(out));
  }

  const Signature& sig_;
  const MetaContext& metas_;
  std::set<std::string> tvars_;
};

inline Term typecheck(const Signature& sig, const MetaContext& metas, const VarContext& ctx,
                      const Term& t, const TypeExpr& type,
                      const std::set<std::string>& tvars = {}) {
  return Typechecker(sig, metas, tvars).check(ctx, t, type);
}

// Infer the type of an elaborated (or inferable) term.
inline std::pair<Term, TypeExpr> infer_type(const Signature& sig, const MetaContext& metas,
                                            const VarContext& ctx, const Term& t,
                                            const std::set<std::string>& tvars = {}) {
  return Typechecker(sig, metas, tvars).infer(ctx, t);
}

}  // namespace soas
