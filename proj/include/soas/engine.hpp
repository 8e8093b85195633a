#pragma once

#include <chrono>
#include <functional>
#include <queue>
#include <unordered_set>

#include "soas/bindings.hpp"
#include "soas/equational.hpp"

namespace soas {

enum class Rule {
  Delete,
  DecomposeOp,
  DecomposeMeta,
  Imitate,
  Project,
  Mutate,
  Identify,
  Eliminate,
  Iterate,
  EliminateStar,
};

inline const char* rule_name(Rule r) {
  switch (r) {
    case Rule::Delete: return "delete";
    case Rule::DecomposeOp: return "decompose";
    case Rule::DecomposeMeta: return "decompose-meta";
    case Rule::Imitate: return "imitate";
    case Rule::Project: return "project";
    case Rule::Mutate: return "mutate";
    case Rule::Identify: return "identify";
    case Rule::Eliminate: return "eliminate";
    case Rule::Iterate: return "iterate";
    case Rule::EliminateStar: return "eliminate*";
  }
  return "?";
}

struct Strategy {
  enum class Kind { Fair, BestFirst, DepthFirst } kind = Kind::Fair;
  int max_mutations = 6;
  int max_bindings = 12;
  int max_nonshrinking = 6;
  int max_solutions = 1;
  double wall_clock_seconds = 120.0;
  int iter_type_depth = 1;
  // Best-first priority: weight * (bindings + mutations) + total term size.
  int best_first_weight = 2;
  // Best-first queue bound; the worst half is dropped when exceeded.
  size_t best_first_queue_limit = 200000;
  bool enable_iterate = true;
  bool enable_eliminate_star = true;
  unsigned long long seed = 0;  // accepted for reproducibility; search is deterministic
};

struct NumberedConstraint {
  int id = 0;
  Constraint c;
};

struct ProblemState {
  MetaContext metas;
  std::vector<NumberedConstraint> constraints;
  int mutations = 0;
  int bindings = 0;
  int nonshrinking = 0;
  int next_id = 0;
  NameSupply supply;

  int total_size() const {
    int s = 0;
    for (const auto& nc : constraints) s += term_size(nc.c.lhs) + term_size(nc.c.rhs);
    return s;
  }
};

// One derivation step: which rule consumed which constraint, the substitution
// applied, and (for mutate) the inserted axiom instance. Enough is recorded to
// rebuild per-constraint equality certificates after a successful run.
struct StepRecord {
  Rule rule = Rule::Delete;
  int constraint_id = -1;
  Constraint consumed;          // snapshot before this step's substitution
  std::vector<int> child_ids;   // produced constraints, in order
  MetaSubstitution theta;       // identity for delete/decompose/mutate
  // mutate only:
  std::string axiom;
  RewriteDir dir = RewriteDir::LeftToRight;
  MetaSubstitution ax_inst;     // axiom metavariables -> instantiated occurrences
  TypeAssignment ax_types;
  Term mid_a, mid_b;            // instantiated source/target sides (A -> B step)
};

struct Transition {
  StepRecord rec;
  ProblemState state;
  bool counted = false;  // contributes to iterative-deepening depth
};

struct Solution {
  MetaSubstitution unifier;  // restricted to the original metavariable context
  std::vector<EqualityCertificate> certificates;  // one per original constraint
  std::vector<std::string> trace;
  int mutations = 0;
  int bindings = 0;
};

struct SolveResult {
  int solutions = 0;
  bool budget_exhausted = false;  // some branch was cut by a budget/time limit
  long long nodes_expanded = 0;
};

struct CheckResult {
  enum class Status { Verified, Refuted, Unknown } status = Status::Unknown;
  std::vector<EqualityCertificate> certificates;
  std::string message;
};

struct SubsumeResult {
  bool witnessed = false;
  MetaSubstitution witness;
  std::vector<EqualityCertificate> certificates;
};

// ---------------------------------------------------------------------------

class Engine {
 public:
  Engine(const Presentation& E, Strategy strat) : E_(E), strat_(strat) {
    collect_candidate_types();
  }

  const Presentation& presentation() const { return E_; }
  const Strategy& strategy() const { return strat_; }

  static std::tuple<int, int, int> cost(const ProblemState& st) {
    return {st.bindings, st.mutations, st.total_size()};
  }

  ProblemState initial_state(const UnificationProblem& P) const {
    ProblemState st;
    st.metas = P.metas;
    for (const auto& c : P.constraints) st.constraints.push_back({st.next_id++, c});
    std::set<std::string> avoid = P.metas.names();
    for (const auto& ax : E_.axioms)
      for (const auto& d : ax.metas.decls()) avoid.insert(d.name);
    st.supply = NameSupply(std::move(avoid));
    seed_candidates(P);
    return st;
  }

  // Enumerates the successors of a state, following the procedure's priority
  // schedule: delete and eliminate* are committing (a single successor is
  // returned); otherwise one constraint is selected (rigid-rigid first, then
  // flex-rigid, then flex-flex) and every rule applicable to it is offered.
  // An empty result on a non-empty state is a dead end.
  std::vector<Transition> transitions(const ProblemState& st) const {
    std::vector<Transition> out;
    if (st.constraints.empty()) return out;
    // Priority 1: delete.
    for (size_t i = 0; i < st.constraints.size(); ++i) {
      if (alpha_equal(st.constraints[i].c.lhs, st.constraints[i].c.rhs)) {
        out.push_back(make_removal(st, i, Rule::Delete, MetaSubstitution{}));
        return out;
      }
    }
    // Priority 1b: eliminate* on any constraint in solved shape.
    if (strat_.enable_eliminate_star) {
      for (size_t i = 0; i < st.constraints.size(); ++i) {
        const Constraint& c = st.constraints[i].c;
        bool flipped = false;
        const Constraint* use = &c;
        Constraint flip{c.ctx, c.rhs, c.lhs, c.type};
        if (!constraint_solved_shape(c)) {
          if (!constraint_solved_shape(flip)) continue;
          use = &flip;
          flipped = true;
        }
        (void)flipped;
        UnificationProblem single;
        single.metas = st.metas;
        single.constraints.push_back(*use);
        MetaSubstitution xi = solved_form_unifier(single);
        xi.domain = st.metas;
        xi.codomain = MetaContext{};
        const std::string head = use->lhs.as_meta()->name;
        for (const auto& d : st.metas.decls())
          if (d.name != head) xi.codomain.add(d);
        out.push_back(make_removal(st, i, Rule::EliminateStar, xi));
        return out;
      }
    }
    // Dead-end check: a rigid-rigid constraint with no decompose and no
    // mutate candidate fails the whole state.
    for (size_t i = 0; i < st.constraints.size(); ++i) {
      const Constraint& c = st.constraints[i].c;
      if (!c.lhs.as_meta() && !c.rhs.as_meta()) {
        if (!can_decompose(c) && !has_mutate_candidate(st, c)) return {};  // fail
      }
    }
    // Select the most constrained constraint: rigid-rigid, then flex-rigid,
    // then flex-flex; ties by position.
    int best = -1, best_class = 3;
    for (size_t i = 0; i < st.constraints.size(); ++i) {
      const Constraint& c = st.constraints[i].c;
      bool lf = c.lhs.as_meta() != nullptr, rf = c.rhs.as_meta() != nullptr;
      int cls = (lf && rf) ? 2 : (lf || rf) ? 1 : 0;
      if (cls < best_class) {
        best_class = cls;
        best = (int)i;
        if (cls == 0) break;
      }
    }
    size_t i = (size_t)best;
    const Constraint& c = st.constraints[i].c;
    const auto* lm = c.lhs.as_meta();
    const auto* rm = c.rhs.as_meta();
    if (!lm && !rm) {
      add_decompose_op(st, i, out);
      add_mutates(st, i, out);
      return out;
    }
    if (lm && rm && lm->name == rm->name) {
      add_decompose_meta(st, i, out);
      add_eliminate(st, i, out);
      add_projections(st, i, out);
      add_iterates(st, i, out);
      add_mutates(st, i, out);
      return out;
    }
    if (lm && rm) {
      add_identify(st, i, out);
      add_projections(st, i, out);
      add_iterates(st, i, out);
      add_mutates(st, i, out);
      return out;
    }
    // flex-rigid
    const Term& rigid = lm ? c.rhs : c.lhs;
    if (rigid.as_op()) add_imitate(st, i, out);
    add_projections(st, i, out);
    if (!rigid.as_op()) {
      // variable on the rigid side: projections plus mutate
      add_mutates(st, i, out);
      return out;
    }
    add_mutates(st, i, out);
    return out;
  }

  SolveResult solve(const UnificationProblem& P,
                    const std::function<bool(const Solution&)>& emit) const {
    ProblemState init = initial_state(P);
    SolveResult res;
    deadline_ = std::chrono::steady_clock::now() +
                std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                    std::chrono::duration<double>(strat_.wall_clock_seconds));
    emitted_keys_.clear();
    orig_ids_.clear();
    for (const auto& nc : init.constraints) orig_ids_.push_back(nc.id);
    orig_metas_ = P.metas;
    stop_ = false;
    if (strat_.kind == Strategy::Kind::Fair) {
      solve_fair(init, emit, res);
    } else if (strat_.kind == Strategy::Kind::DepthFirst) {
      budget_hit_ = false;
      depth_pruned_ = false;
      visited_.clear();
      std::vector<StepRecord> path;
      dfs(init, path, 0, strat_.max_bindings + strat_.max_mutations, emit, res);
      if ((budget_hit_ || depth_pruned_) && res.solutions == 0) res.budget_exhausted = true;
    } else {
      solve_best_first(init, emit, res);
    }
    return res;
  }

  CheckResult check_unifier(const UnificationProblem& P, const MetaSubstitution& xi,
                            EqualBudget budget) const {
    CheckResult r;
    // Build the codomain context and typecheck each mapped body.
    MetaContext cod = xi.codomain;
    if (cod.decls().empty()) {
      for (const auto& d : P.metas.decls())
        if (!xi.maps(d.name)) cod.add(d);
    }
    VarContext base = P.constraints.empty() ? VarContext{} : P.constraints.front().ctx;
    try {
      for (const auto& [name, body] : xi.map) {
        const MetaDecl* d = P.metas.find(name);
        if (!d) continue;  // entry outside the problem's context; ignored
        if ((int)d->params.size() != body.binders)
          throw TypeError("substitution entry for " + name + " has wrong binder count");
        VarContext ctx = base.extended(d->params, body.names);
        typecheck(E_.sig, cod, ctx, body.body, d->result);
      }
    } catch (const TypeError& e) {
      r.status = CheckResult::Status::Refuted;
      r.message = e.what();
      return r;
    }
    for (const auto& c : P.constraints) {
      Term l = apply_meta(xi, c.lhs);
      Term rr = apply_meta(xi, c.rhs);
      auto cert = equal_modulo(E_, l, rr, budget);
      if (!cert) {
        r.status = CheckResult::Status::Unknown;
        r.message = "no certificate found within budget for a constraint";
        return r;
      }
      r.certificates.push_back(std::move(*cert));
    }
    r.status = CheckResult::Status::Verified;
    return r;
  }

  // Does theta subsume xi (exists eta with eta . theta == xi modulo E)?
  // Searches by solving { theta(m[zs]) =? xi(m[zs]) : m in dom } with xi's
  // codomain metavariables frozen as opaque operators.
  SubsumeResult subsumes(const MetaContext& dom, const MetaSubstitution& theta,
                         const MetaSubstitution& xi, int budget) const {
    SubsumeResult out;
    std::set<std::string> frozen;
    for (const auto& [n, body] : xi.map) collect_free_metavariables(body.body, frozen);
    for (const auto& d : xi.codomain.decls()) frozen.insert(d.name);
    for (const auto& d : dom.decls())
      if (!xi.maps(d.name)) frozen.insert(d.name);  // unmapped entries stay themselves
    // Extended presentation with one opaque operator per frozen metavariable.
    Presentation Ef = E_;
    for (const auto& n : frozen) {
      MetaDecl decl = find_frozen_decl(n, xi, dom);
      OperatorDecl od;
      od.name = "~" + n;
      for (const auto& p : decl.params) od.args.push_back(ArgArity{{}, p});
      od.result = decl.result;
      Ef.sig.operators[od.name] = od;
    }
    UnificationProblem Q;
    // Existential metavariables: theta's codomain, i.e. everything free in
    // theta's bodies plus unmapped domain entries.
    std::set<std::string> exist;
    for (const auto& [n, body] : theta.map) collect_free_metavariables(body.body, exist);
    for (const auto& d : dom.decls())
      if (!theta.maps(d.name)) exist.insert(d.name);
    for (const auto& n : exist) Q.metas.add(find_frozen_decl(n, theta, dom));
    for (const auto& d : dom.decls()) {
      VarContext ctx;
      for (size_t j = 0; j < d.params.size(); ++j)
        ctx.push(d.params[j], "z" + std::to_string(j + 1));
      Term lhs = occurrence_of(d, theta);
      Term rhs = freeze(occurrence_of(d, xi), frozen);
      Q.constraints.push_back(Constraint{ctx, lhs, rhs, d.result});
    }
    Strategy s = strat_;
    s.max_bindings = budget;
    s.max_mutations = std::min(strat_.max_mutations, budget);
    s.max_nonshrinking = std::min(strat_.max_nonshrinking, budget);
    s.max_solutions = 1;
    Engine sub(Ef, s);
    SubsumeResult* outp = &out;
    sub.solve(Q, [outp, &frozen](const Solution& sol) {
      outp->witnessed = true;
      outp->witness = sol.unifier;
      for (auto& [n, body] : outp->witness.map)
        body.body = unfreeze(body.body, frozen);
      outp->certificates = sol.certificates;
      return false;  // stop after the first witness
    });
    return out;
  }

  const std::vector<TypeExpr>& candidate_types() const { return candidates_; }

 private:
  // ----- candidate ground types --------------------------------------------
  void collect_candidate_types() {
    std::set<TypeExpr> s;
    auto add = [&](const TypeExpr& t) {
      if (type_is_ground(t)) s.insert(t);
    };
    std::function<void(const TypeExpr&)> add_subtypes = [&](const TypeExpr& t) {
      add(t);
      for (const auto& a : t.args) add_subtypes(a);
    };
    for (const auto& srt : E_.sig.sorts) add(TypeExpr::con(srt));
    for (const auto& ax : E_.axioms) {
      add_subtypes(ax.type);
      for (const auto& d : ax.metas.decls()) {
        add_subtypes(d.result);
        for (const auto& p : d.params) add_subtypes(p);
      }
    }
    base_candidates_ = std::move(s);
    rebuild_candidates();
  }

  void seed_candidates(const UnificationProblem& P) const {
    std::function<void(const TypeExpr&)> add_subtypes = [&](const TypeExpr& t) {
      if (type_is_ground(t)) base_candidates_.insert(t);
      for (const auto& a : t.args) add_subtypes(a);
    };
    std::function<void(const Term&)> scan = [&](const Term& t) {
      if (const auto* m = t.as_meta()) {
        for (const auto& p : m->params) scan(p);
      } else if (const auto* o = t.as_op()) {
        for (const auto& i : o->inst) add_subtypes(i);
        for (const auto& a : o->args) scan(a.body);
      }
    };
    for (const auto& d : P.metas.decls()) {
      add_subtypes(d.result);
      for (const auto& p : d.params) add_subtypes(p);
    }
    for (const auto& c : P.constraints) {
      add_subtypes(c.type);
      for (const auto& ty : c.ctx.types()) add_subtypes(ty);
      scan(c.lhs);
      scan(c.rhs);
    }
    rebuild_candidates();
  }

  void rebuild_candidates() const {
    std::set<TypeExpr> closed = base_candidates_;
    for (int d = 0; d < strat_.iter_type_depth; ++d) {
      std::set<TypeExpr> next = closed;
      for (const auto& [name, arity] : E_.sig.type_constructors) {
        if (arity == 1) {
          for (const auto& a : closed) next.insert(TypeExpr::con(name, {a}));
        } else if (arity == 2) {
          for (const auto& a : closed)
            for (const auto& b : closed) {
              if (next.size() > 400) break;
              next.insert(TypeExpr::con(name, {a, b}));
            }
        }
      }
      closed = std::move(next);
      if (closed.size() > 400) break;
    }
    candidates_.assign(closed.begin(), closed.end());
    base_only_.assign(base_candidates_.begin(), base_candidates_.end());
  }

  // ----- successor construction helpers ------------------------------------
  Transition make_removal(const ProblemState& st, size_t idx, Rule rule,
                          MetaSubstitution theta) const {
    Transition t;
    t.rec.rule = rule;
    t.rec.constraint_id = st.constraints[idx].id;
    t.rec.consumed = st.constraints[idx].c;
    t.rec.theta = theta;
    t.state = st;
    t.state.constraints.erase(t.state.constraints.begin() + (long)idx);
    if (!theta.map.empty()) {
      for (auto& nc : t.state.constraints) apply_meta_in_place(theta, nc.c);
      if (!theta.codomain.decls().empty()) t.state.metas = theta.codomain;
    }
    t.counted = false;
    return t;
  }

  // Applies a binding substitution: consumed constraint replaced by its
  // theta-image, every other constraint rewritten, metavariable context
  // updated.
  void push_binding(const ProblemState& st, size_t idx, Rule rule, const BindingResult& br,
                    std::vector<Transition>& out, const NameSupply* supply = nullptr) const {
    if (st.bindings + 1 > strat_.max_bindings) {
      budget_hit_ = true;
      return;
    }
    Transition t;
    t.rec.rule = rule;
    t.rec.constraint_id = st.constraints[idx].id;
    t.rec.consumed = st.constraints[idx].c;
    t.rec.theta = br.subst;
    t.state = st;
    if (supply) t.state.supply = *supply;
    for (auto& nc : t.state.constraints) apply_meta_in_place(br.subst, nc.c);
    // The consumed constraint is replaced by its own image as the single child.
    NumberedConstraint child;
    child.id = t.state.next_id++;
    child.c = t.state.constraints[idx].c;
    t.rec.child_ids.push_back(child.id);
    t.state.constraints.erase(t.state.constraints.begin() + (long)idx);
    t.state.constraints.push_back(child);
    t.state.metas = br.subst.codomain;
    t.state.bindings = st.bindings + 1;
    if (t.state.total_size() >= st.total_size()) {
      if (st.nonshrinking + 1 > strat_.max_nonshrinking) {
        budget_hit_ = true;
        return;
      }
      t.state.nonshrinking = st.nonshrinking + 1;
    }
    t.counted = true;
    out.push_back(std::move(t));
  }

  // eliminate: the constraint disappears entirely (sides agree after theta).
  void push_eliminating_binding(const ProblemState& st, size_t idx, const BindingResult& br,
                                std::vector<Transition>& out, const NameSupply* supply = nullptr) const {
    if (st.bindings + 1 > strat_.max_bindings) {
      budget_hit_ = true;
      return;
    }
    Transition t;
    t.rec.rule = Rule::Eliminate;
    t.rec.constraint_id = st.constraints[idx].id;
    t.rec.consumed = st.constraints[idx].c;
    t.rec.theta = br.subst;
    t.state = st;
    if (supply) t.state.supply = *supply;
    for (auto& nc : t.state.constraints) apply_meta_in_place(br.subst, nc.c);
    t.state.constraints.erase(t.state.constraints.begin() + (long)idx);
    t.state.metas = br.subst.codomain;
    t.state.bindings = st.bindings + 1;
    t.counted = true;
    out.push_back(std::move(t));
  }

  void add_decompose_op(const ProblemState& st, size_t idx, std::vector<Transition>& out) const {
    const Constraint& c = st.constraints[idx].c;
    const auto* lo = c.lhs.as_op();
    const auto* ro = c.rhs.as_op();
    if (!lo || !ro) {
      // variable versus variable: equal indices were deleted already
      return;
    }
    if (lo->name != ro->name || lo->inst != ro->inst || lo->args.size() != ro->args.size()) return;
    const OperatorDecl& decl = E_.sig.op(lo->name);
    TypeAssignment assign;
    for (size_t k = 0; k < decl.type_vars.size(); ++k) assign[decl.type_vars[k]] = lo->inst[k];
    Transition t;
    t.rec.rule = Rule::DecomposeOp;
    t.rec.constraint_id = st.constraints[idx].id;
    t.rec.consumed = c;
    t.state = st;
    t.state.constraints.erase(t.state.constraints.begin() + (long)idx);
    for (size_t j = 0; j < lo->args.size(); ++j) {
      if (lo->args[j].binders != ro->args[j].binders) return;
      std::vector<TypeExpr> btypes;
      for (const auto& b : decl.args[j].binders) btypes.push_back(apply_type_assignment(b, assign));
      NumberedConstraint nc;
      nc.id = t.state.next_id++;
      nc.c.ctx = c.ctx.extended(btypes, lo->args[j].names);
      nc.c.lhs = lo->args[j].body;
      nc.c.rhs = ro->args[j].body;
      nc.c.type = apply_type_assignment(decl.args[j].body, assign);
      t.rec.child_ids.push_back(nc.id);
      t.state.constraints.push_back(std::move(nc));
    }
    t.counted = false;
    out.push_back(std::move(t));
  }

  void add_decompose_meta(const ProblemState& st, size_t idx, std::vector<Transition>& out) const {
    const Constraint& c = st.constraints[idx].c;
    const auto* lm = c.lhs.as_meta();
    const auto* rm = c.rhs.as_meta();
    if (!lm || !rm || lm->name != rm->name) return;
    const MetaDecl& d = st.metas.get(lm->name);
    Transition t;
    t.rec.rule = Rule::DecomposeMeta;
    t.rec.constraint_id = st.constraints[idx].id;
    t.rec.consumed = c;
    t.state = st;
    t.state.constraints.erase(t.state.constraints.begin() + (long)idx);
    for (size_t j = 0; j < lm->params.size(); ++j) {
      NumberedConstraint nc;
      nc.id = t.state.next_id++;
      nc.c.ctx = c.ctx;
      nc.c.lhs = lm->params[j];
      nc.c.rhs = rm->params[j];
      nc.c.type = d.params[j];
      t.rec.child_ids.push_back(nc.id);
      t.state.constraints.push_back(std::move(nc));
    }
    t.counted = false;
    out.push_back(std::move(t));
  }

  void add_imitate(const ProblemState& st, size_t idx, std::vector<Transition>& out) const {
    const Constraint& c = st.constraints[idx].c;
    const auto* lm = c.lhs.as_meta();
    const Term& rigid = lm ? c.rhs : c.lhs;
    const auto* ro = rigid.as_op();
    const auto* m = lm ? lm : c.rhs.as_meta();
    if (!ro || !m) return;
    NameSupply supply = st.supply;  // fresh names drawn against a copy
    try {
      BindingResult br = imitation(st.metas, m->name, E_.sig.op(ro->name), ro->inst, supply);
      push_binding(st, idx, Rule::Imitate, br, out, &supply);
    } catch (const TypeError&) {
      // not applicable (e.g. result-type mismatch through opaque instantiation)
    }
  }

  void add_projections(const ProblemState& st, size_t idx, std::vector<Transition>& out) const {
    const Constraint& c = st.constraints[idx].c;
    for (const Term* side : {&c.lhs, &c.rhs}) {
      const auto* m = side->as_meta();
      if (!m) continue;
      if (side == &c.rhs && c.lhs.as_meta() && c.lhs.as_meta()->name == m->name) continue;
      const MetaDecl& d = st.metas.get(m->name);
      for (int i = 0; i < (int)d.params.size(); ++i) {
        if (d.params[(size_t)i] != d.result) continue;
        BindingResult br = jp_projection(st.metas, m->name, i);
        push_binding(st, idx, Rule::Project, br, out);
      }
    }
  }

  void add_identify(const ProblemState& st, size_t idx, std::vector<Transition>& out) const {
    const Constraint& c = st.constraints[idx].c;
    const auto* lm = c.lhs.as_meta();
    const auto* rm = c.rhs.as_meta();
    if (!lm || !rm || lm->name == rm->name) return;
    NameSupply supply = st.supply;
    try {
      BindingResult br = identification(st.metas, lm->name, rm->name, supply);
      push_binding(st, idx, Rule::Identify, br, out, &supply);
    } catch (const TypeError&) {
    }
  }

  void add_eliminate(const ProblemState& st, size_t idx, std::vector<Transition>& out) const {
    const Constraint& c = st.constraints[idx].c;
    const auto* lm = c.lhs.as_meta();
    const auto* rm = c.rhs.as_meta();
    if (!lm || !rm || lm->name != rm->name) return;
    std::vector<int> kept;
    for (size_t j = 0; j < lm->params.size(); ++j)
      if (alpha_equal(lm->params[j], rm->params[j])) kept.push_back((int)j);
    if (kept.size() == lm->params.size()) return;  // alpha-equal; delete handles it
    NameSupply supply = st.supply;
    BindingResult br = elimination(st.metas, lm->name, kept, supply);
    push_eliminating_binding(st, idx, br, out, &supply);
  }

  void add_iterates(const ProblemState& st, size_t idx, std::vector<Transition>& out) const {
    if (!strat_.enable_iterate) return;
    const Constraint& c = st.constraints[idx].c;
    std::set<std::string> targets;
    if (const auto* m = c.lhs.as_meta()) targets.insert(m->name);
    if (const auto* m = c.rhs.as_meta()) targets.insert(m->name);
    for (const auto& mname : targets) {
      for (const auto& [fname, decl] : E_.sig.operators) {
        for (const auto& inst : operator_instantiations(decl, strat_.iter_type_depth)) {
          NameSupply supply = st.supply;
          try {
            BindingResult br = iteration(st.metas, mname, decl, inst, supply);
            push_binding(st, idx, Rule::Iterate, br, out, &supply);
          } catch (const TypeError&) {
          }
        }
      }
    }
  }

  // All ground instantiations of an operator's schematic variables drawn from
  // the candidate type set (bounded). Depth <= 1 restricts to types occurring
  // in the problem and presentation; larger depths draw from the constructor
  // closure.
  std::vector<std::vector<TypeExpr>> operator_instantiations(const OperatorDecl& decl,
                                                             int depth) const {
    const std::vector<TypeExpr>& pool = depth > 1 ? candidates_ : base_only_;
    std::vector<std::vector<TypeExpr>> out{{}};
    for (size_t v = 0; v < decl.type_vars.size(); ++v) {
      std::vector<std::vector<TypeExpr>> next;
      for (const auto& partial : out) {
        for (const auto& cand : pool) {
          auto n = partial;
          n.push_back(cand);
          next.push_back(std::move(n));
          if (next.size() > 64) break;
        }
        if (next.size() > 64) break;
      }
      out = std::move(next);
    }
    return out;
  }

  // Applicability probes used by the dead-end check (no successor states built).
  static bool can_decompose(const Constraint& c) {
    const auto* lo = c.lhs.as_op();
    const auto* ro = c.rhs.as_op();
    if (!lo || !ro) return false;
    if (lo->name != ro->name || lo->inst != ro->inst || lo->args.size() != ro->args.size())
      return false;
    for (size_t j = 0; j < lo->args.size(); ++j)
      if (lo->args[j].binders != ro->args[j].binders) return false;
    return true;
  }

  bool has_mutate_candidate(const ProblemState& st, const Constraint& c) const {
    if (st.mutations + 1 > strat_.max_mutations) {
      budget_hit_ = true;
      return false;
    }
    for (const auto& ax : E_.axioms) {
      int nplace = ax.oriented ? 1 : 2;
      for (int pl = 0; pl < nplace; ++pl) {
        const Term& src = pl == 0 ? ax.lhs : ax.rhs;
        const Term& tgt = pl == 0 ? ax.rhs : ax.lhs;
        if (!root_compat(c.lhs, src) || !root_compat(tgt, c.rhs)) continue;
        TypeAssignment assign;
        if (!match_type(ax.type, c.type, assign)) continue;
        if (!pin_roots(c.lhs, src, assign)) continue;
        if (!pin_roots(c.rhs, tgt, assign)) continue;
        return true;
      }
    }
    return false;
  }

  static bool root_compat(const Term& side, const Term& ax_side) {
    if (side.as_meta() || ax_side.as_meta()) return true;
    const auto* so = side.as_op();
    const auto* ao = ax_side.as_op();
    if (so && ao) return so->name == ao->name;
    return false;  // a bare variable never matches an operator-rooted side
  }

  void add_mutates(const ProblemState& st, size_t idx, std::vector<Transition>& out) const {
    const Constraint& c = st.constraints[idx].c;
    if (st.mutations + 1 > strat_.max_mutations) {
      budget_hit_ = true;
      return;
    }
    for (const auto& ax : E_.axioms) {
      int nplace = ax.oriented ? 1 : 2;
      for (int pl = 0; pl < nplace; ++pl) {
        const Term& src = pl == 0 ? ax.lhs : ax.rhs;
        const Term& tgt = pl == 0 ? ax.rhs : ax.lhs;
        // The inserted instance sits between the two sides: lhs =? src-inst
        // and tgt-inst =? rhs, so src faces lhs and tgt faces rhs.
        if (!root_compat(c.lhs, src) || !root_compat(tgt, c.rhs)) continue;
        TypeAssignment assign;
        if (!match_type(ax.type, c.type, assign)) continue;
        if (!pin_roots(c.lhs, src, assign)) continue;
        if (!pin_roots(c.rhs, tgt, assign)) continue;
        for (const auto& full : complete_assignments(ax, assign)) {
          NameSupply supply = st.supply;
          InstantiatedAxiom inst = instantiate_axiom(ax, full, c.ctx, supply);
          Term A = pl == 0 ? inst.lhs : inst.rhs;
          Term B = pl == 0 ? inst.rhs : inst.lhs;
          Transition t;
          t.rec.rule = Rule::Mutate;
          t.rec.constraint_id = st.constraints[idx].id;
          t.rec.consumed = c;
          t.rec.axiom = ax.name;
          t.rec.dir = pl == 0 ? RewriteDir::LeftToRight : RewriteDir::RightToLeft;
          t.rec.ax_inst = inst.remap;
          t.rec.ax_types = full;
          t.rec.mid_a = A;
          t.rec.mid_b = B;
          t.state = st;
          t.state.supply = std::move(supply);
          t.state.metas.extend(inst.fresh);
          t.state.constraints.erase(t.state.constraints.begin() + (long)idx);
          NumberedConstraint c1, c2;
          c1.id = t.state.next_id++;
          c1.c = Constraint{c.ctx, c.lhs, A, c.type};
          c2.id = t.state.next_id++;
          c2.c = Constraint{c.ctx, B, c.rhs, c.type};
          t.rec.child_ids = {c1.id, c2.id};
          t.state.constraints.push_back(std::move(c1));
          t.state.constraints.push_back(std::move(c2));
          t.state.mutations = st.mutations + 1;
          t.counted = true;
          out.push_back(std::move(t));
        }
      }
    }
  }

  // Refine the assignment by matching axiom-side root instantiations against
  // rigid constraint-side roots (the footnote's cheap pre-filter).
  static bool pin_roots(const Term& side, const Term& ax_side, TypeAssignment& assign) {
    const auto* so = side.as_op();
    const auto* ao = ax_side.as_op();
    if (!so || !ao || so->name != ao->name) return true;
    if (so->inst.size() != ao->inst.size()) return false;
    for (size_t i = 0; i < ao->inst.size(); ++i)
      if (!match_type(ao->inst[i], so->inst[i], assign)) return false;
    return true;
  }

  std::vector<TypeAssignment> complete_assignments(const Axiom& ax,
                                                   const TypeAssignment& partial) const {
    std::vector<std::string> missing;
    for (const auto& v : ax.type_vars)
      if (!partial.count(v)) missing.push_back(v);
    std::vector<TypeAssignment> out{partial};
    for (const auto& v : missing) {
      std::vector<TypeAssignment> next;
      for (const auto& p : out) {
        for (const auto& cand : base_only_) {
          TypeAssignment n = p;
          n[v] = cand;
          next.push_back(std::move(n));
        }
      }
      out = std::move(next);
      if (out.size() > 512) out.resize(512);
    }
    return out;
  }

  // ----- fair (iterative deepening) search ---------------------------------
  void solve_fair(const ProblemState& init, const std::function<bool(const Solution&)>& emit,
                  SolveResult& res) const {
    int max_limit = strat_.max_bindings + strat_.max_mutations;
    for (int limit = 0; limit <= max_limit && !stop_; ++limit) {
      budget_hit_ = false;
      depth_pruned_ = false;
      visited_.clear();
      std::vector<StepRecord> path;
      dfs(init, path, 0, limit, emit, res);
      if (!depth_pruned_ && !budget_hit_) break;  // search space exhausted
      if (std::chrono::steady_clock::now() > deadline_) {
        res.budget_exhausted = true;
        break;
      }
    }
    if (budget_hit_ || depth_pruned_) res.budget_exhausted = res.solutions == 0 || res.budget_exhausted;
  }

  void dfs(const ProblemState& st, std::vector<StepRecord>& path, int used, int limit,
           const std::function<bool(const Solution&)>& emit, SolveResult& res) const {
    if (stop_) return;
    if (std::chrono::steady_clock::now() > deadline_) {
      res.budget_exhausted = true;
      stop_ = true;
      return;
    }
    ++res.nodes_expanded;
    if (st.constraints.empty()) {
      // Under iterative deepening, emit only at the current horizon so that
      // shallower solutions are not re-emitted on deeper rounds.
      if (strat_.kind != Strategy::Kind::Fair || used == limit) emit_solution(st, path, emit, res);
      return;
    }
    // Transposition pruning within this deepening round.
    std::string key = state_key(st);
    auto it = visited_.find(key);
    int remaining = limit - used;
    if (it != visited_.end() && it->second >= remaining) return;
    visited_[key] = remaining;
    for (auto& t : transitions(st)) {
      int nused = used + (t.counted ? 1 : 0);
      if (nused > limit) {
        depth_pruned_ = true;
        continue;
      }
      path.push_back(t.rec);
      dfs(t.state, path, nused, limit, emit, res);
      path.pop_back();
      if (stop_) return;
    }
  }

  // ----- best-first search --------------------------------------------------
  // Weighted best-first on weight * (bindings + mutations) + total size.
  // Nodes share their derivation history through parent pointers; the path is
  // materialised only when a solution is reached.
  void solve_best_first(const ProblemState& init, const std::function<bool(const Solution&)>& emit,
                        SolveResult& res) const {
    struct Node {
      ProblemState st;
      StepRecord rec;  // step that produced this node (unused at the root)
      std::shared_ptr<const Node> parent;
    };
    struct Entry {
      long long f;
      long long id;
      std::shared_ptr<const Node> node;
      bool operator<(const Entry& o) const {  // max-heap: invert
        return std::tie(f, id) > std::tie(o.f, o.id);
      }
    };
    auto fval = [&](const ProblemState& st) {
      return (long long)strat_.best_first_weight * (st.bindings + st.mutations) + st.total_size();
    };
    std::priority_queue<Entry> pq;
    long long next_id = 0;
    pq.push({fval(init), next_id++, std::make_shared<Node>(Node{init, {}, nullptr})});
    std::unordered_set<size_t> seen;  // hashed canonical state keys
    std::hash<std::string> hasher;
    seen.insert(hasher(state_key(init)));
    while (!pq.empty() && !stop_) {
      if (std::chrono::steady_clock::now() > deadline_) {
        res.budget_exhausted = true;
        return;
      }
      Entry e = pq.top();
      pq.pop();
      ++res.nodes_expanded;
      if (e.node->st.constraints.empty()) {
        std::vector<StepRecord> path;
        for (const Node* n = e.node.get(); n->parent; n = n->parent.get()) path.push_back(n->rec);
        std::reverse(path.begin(), path.end());
        emit_solution(e.node->st, path, emit, res);
        continue;
      }
      for (auto& t : transitions(e.node->st)) {
        if (!seen.insert(hasher(state_key(t.state))).second) continue;
        long long f = fval(t.state);
        pq.push({f, next_id++,
                 std::make_shared<Node>(Node{std::move(t.state), std::move(t.rec), e.node})});
      }
      if (pq.size() > strat_.best_first_queue_limit) {
        // Keep the better half; dropping frontier nodes trades completeness
        // for bounded memory, so mark the run as budget-limited.
        std::vector<Entry> keep;
        keep.reserve(pq.size() / 2);
        for (size_t k = 0; k < strat_.best_first_queue_limit / 2 && !pq.empty(); ++k) {
          keep.push_back(pq.top());
          pq.pop();
        }
        pq = std::priority_queue<Entry>(keep.begin(), keep.end());
        budget_hit_ = true;
      }
    }
    if (budget_hit_ && res.solutions == 0) res.budget_exhausted = true;
  }

  std::string state_key(const ProblemState& st) const {
    std::ostringstream os;
    std::map<std::string, std::string> ren;
    os << st.mutations << "|" << st.bindings << "|" << st.nonshrinking << "|";
    for (const auto& nc : st.constraints) {
      for (const auto& ty : nc.c.ctx.types()) {
        canon_type(ty, os);
        os << ",";
      }
      os << ":";
      canon_term(nc.c.lhs, os, &ren);
      os << "=";
      canon_term(nc.c.rhs, os, &ren);
      os << ";";
    }
    // Declarations of the metavariables in play, keyed canonically so the
    // key is independent of fresh-name choices.
    std::map<std::string, std::string> declsigs;
    for (const auto& d : st.metas.decls()) {
      auto it = ren.find(d.name);
      if (it == ren.end()) continue;
      std::ostringstream ds;
      for (const auto& p : d.params) {
        canon_type(p, ds);
        ds << ",";
      }
      ds << ")";
      canon_type(d.result, ds);
      declsigs[it->second] = ds.str();
    }
    for (const auto& [n, sig] : declsigs) os << n << "(" << sig << ";";
    return os.str();
  }

  // ----- solution assembly --------------------------------------------------
  void emit_solution(const ProblemState& st, const std::vector<StepRecord>& path,
                     const std::function<bool(const Solution&)>& emit, SolveResult& res) const {
    Solution sol;
    sol.mutations = st.mutations;
    sol.bindings = st.bindings;
    // Compose the per-step substitutions, then restrict to the original context.
    MetaSubstitution acc = MetaSubstitution::identity(orig_metas_);
    for (const auto& r : path)
      if (!r.theta.map.empty()) acc = compose(r.theta, acc);
    sol.unifier.domain = orig_metas_;
    for (const auto& d : orig_metas_.decls()) {
      auto it = acc.map.find(d.name);
      if (it != acc.map.end()) sol.unifier.map[d.name] = it->second;
    }
    std::set<std::string> codnames;
    for (const auto& [n, body] : sol.unifier.map) collect_free_metavariables(body.body, codnames);
    for (const auto& d : orig_metas_.decls())
      if (!sol.unifier.maps(d.name)) codnames.insert(d.name);
    for (const auto& d : st.metas.decls())
      if (codnames.count(d.name)) sol.unifier.codomain.add(d);
    for (const auto& d : orig_metas_.decls())
      if (codnames.count(d.name) && !sol.unifier.codomain.contains(d.name))
        sol.unifier.codomain.add(d);
    std::string key = canon_subst_key(sol.unifier);
    if (!emitted_keys_.insert(key).second) return;
    for (const auto& r : path)
      sol.trace.push_back(std::string(rule_name(r.rule)) + " #" + std::to_string(r.constraint_id) +
                          (r.axiom.empty() ? "" : " [" + r.axiom + "]"));
    build_certificates(path, sol);
    for (const auto& cert : sol.certificates)
      if (!check_certificate(E_, cert))
        throw std::logic_error("internal error: reconstructed certificate failed to replay");
    ++res.solutions;
    if (!emit(sol) || res.solutions >= strat_.max_solutions) stop_ = true;
  }

  // Rebuilds one equality certificate per original constraint from the
  // derivation path, by composing each step's substitution suffix into the
  // recorded intermediate terms.
  void build_certificates(const std::vector<StepRecord>& path, Solution& sol) const {
    size_t L = path.size();
    // full[i] = theta_{L-1} o ... o theta_i (composition of step i onward).
    std::vector<MetaSubstitution> full(L + 1);
    for (size_t i = L; i-- > 0;) full[i] = compose(full[i + 1], path[i].theta);
    std::map<int, size_t> consumed_at;
    for (size_t i = 0; i < L; ++i) consumed_at[path[i].constraint_id] = i;
    std::function<EqualityCertificate(int)> build = [&](int id) -> EqualityCertificate {
      auto it = consumed_at.find(id);
      if (it == consumed_at.end())
        throw std::logic_error("internal error: constraint never consumed");
      size_t i = it->second;
      const StepRecord& sr = path[i];
      Term lf = apply_meta(full[i], sr.consumed.lhs);
      Term rf = apply_meta(full[i], sr.consumed.rhs);
      switch (sr.rule) {
        case Rule::Delete:
        case Rule::EliminateStar:
        case Rule::Eliminate:
          if (!alpha_equal(lf, rf))
            throw std::logic_error("internal error: removal step endpoints differ");
          return EqualityCertificate{lf, {}, rf};
        case Rule::Project:
        case Rule::Imitate:
        case Rule::Identify:
        case Rule::Iterate:
          return build(sr.child_ids[0]);
        case Rule::DecomposeOp:
        case Rule::DecomposeMeta: {
          const auto* hm = sr.rule == Rule::DecomposeMeta ? sr.consumed.lhs.as_meta() : nullptr;
          auto mapped = hm ? full[i].map.find(hm->name) : full[i].map.end();
          if (hm && mapped != full[i].map.end()) {
            // The head metavariable is instantiated by the final substitution,
            // so the parameter slots no longer exist in lf/rf. Lift each child
            // chain through the instantiated body by congruence: replay it at
            // every occurrence of the corresponding parameter, shifted under
            // the binders above the occurrence.
            const ScopedTerm& body = mapped->second;
            int k = body.binders;
            EqualityCertificate cert{lf, {}, rf};
            Term cur = lf;
            struct Occ {
              std::vector<int> path;
              int depth;
              int param;
            };
            std::vector<Occ> occs;
            std::vector<int> p;
            std::function<void(const Term&, int)> walk = [&](const Term& t, int depth) {
              if (const auto* v = t.as_var()) {
                if (v->index >= depth && v->index < depth + k)
                  occs.push_back({p, depth, k - 1 - (v->index - depth)});
              } else if (const auto* m = t.as_meta()) {
                for (size_t a = 0; a < m->params.size(); ++a) {
                  p.push_back((int)a);
                  walk(m->params[a], depth);
                  p.pop_back();
                }
              } else if (const auto* o = t.as_op()) {
                for (size_t a = 0; a < o->args.size(); ++a) {
                  p.push_back((int)a);
                  walk(o->args[a].body, depth + o->args[a].binders);
                  p.pop_back();
                }
              }
            };
            walk(body.body, 0);
            std::vector<EqualityCertificate> subs;
            for (size_t j = 0; j < sr.child_ids.size(); ++j) subs.push_back(build(sr.child_ids[j]));
            for (const auto& oc : occs) {
              const EqualityCertificate& sub = subs.at((size_t)oc.param);
              for (const auto& stp : sub.steps) {
                RewriteStep s2 = stp;
                s2.path = oc.path;
                s2.path.insert(s2.path.end(), stp.path.begin(), stp.path.end());
                for (auto& [n, b] : s2.inst.map) b.body = shift_term(b.body, oc.depth, b.binders);
                s2.before = cur;
                s2.after = replace_at(cur, oc.path, shift_term(stp.after, oc.depth));
                cert.steps.push_back(s2);
                cur = s2.after;
              }
              cur = replace_at(cur, oc.path, shift_term(sub.end, oc.depth));
            }
            if (!alpha_equal(cur, rf))
              throw std::logic_error("internal error: decompose splice endpoints differ");
            return cert;
          }
          EqualityCertificate cert{lf, {}, rf};
          Term cur = lf;
          for (size_t j = 0; j < sr.child_ids.size(); ++j) {
            EqualityCertificate sub = build(sr.child_ids[j]);
            for (const auto& stp : sub.steps) {
              RewriteStep s2 = stp;
              s2.path.insert(s2.path.begin(), (int)j);
              s2.before = cur;
              s2.after = replace_at(cur, {(int)j}, stp.after);
              cert.steps.push_back(s2);
              cur = s2.after;
            }
            // After finishing child j its slot holds the child's end term.
            cur = replace_at(cur, {(int)j}, sub.end);
          }
          if (!alpha_equal(cur, rf))
            throw std::logic_error("internal error: decompose splice endpoints differ");
          return cert;
        }
        case Rule::Mutate: {
          EqualityCertificate left = build(sr.child_ids[0]);
          EqualityCertificate right = build(sr.child_ids[1]);
          RewriteStep root;
          root.axiom = sr.axiom;
          root.dir = sr.dir;
          root.inst = compose(full[i], sr.ax_inst);
          root.types = sr.ax_types;
          root.before = apply_meta(full[i], sr.mid_a);
          root.after = apply_meta(full[i], sr.mid_b);
          EqualityCertificate cert{lf, {}, rf};
          cert.steps = left.steps;
          cert.steps.push_back(root);
          cert.steps.insert(cert.steps.end(), right.steps.begin(), right.steps.end());
          return cert;
        }
      }
      throw std::logic_error("unreachable");
    };
    for (int id : orig_ids_) sol.certificates.push_back(build(id));
  }

  static MetaDecl find_frozen_decl(const std::string& n, const MetaSubstitution& s,
                                   const MetaContext& dom) {
    if (const MetaDecl* d = s.codomain.find(n)) return *d;
    if (const MetaDecl* d = dom.find(n)) return *d;
    throw TypeError("no declaration available for metavariable " + n);
  }

  static Term occurrence_of(const MetaDecl& d, const MetaSubstitution& s) {
    auto it = s.map.find(d.name);
    int k = (int)d.params.size();
    if (it == s.map.end()) {
      std::vector<Term> zs;
      for (int j = 0; j < k; ++j) zs.push_back(Term::var(k - 1 - j));
      return Term::meta(d.name, std::move(zs));
    }
    return it->second.body;
  }

  static Term freeze(const Term& t, const std::set<std::string>& frozen) {
    if (t.as_var()) return t;
    if (const auto* m = t.as_meta()) {
      std::vector<Term> ps;
      for (const auto& p : m->params) ps.push_back(freeze(p, frozen));
      if (frozen.count(m->name)) {
        std::vector<ScopedTerm> args;
        for (auto& p : ps) args.emplace_back(0, p);
        return Term::op("~" + m->name, {}, std::move(args));
      }
      return Term::meta(m->name, std::move(ps));
    }
    const auto* o = t.as_op();
    std::vector<ScopedTerm> as;
    for (const auto& a : o->args) as.emplace_back(a.binders, freeze(a.body, frozen), a.names);
    return Term::op(o->name, o->inst, std::move(as));
  }

  static Term unfreeze(const Term& t, const std::set<std::string>& frozen) {
    if (t.as_var()) return t;
    if (const auto* m = t.as_meta()) {
      std::vector<Term> ps;
      for (const auto& p : m->params) ps.push_back(unfreeze(p, frozen));
      return Term::meta(m->name, std::move(ps));
    }
    const auto* o = t.as_op();
    if (o->name.size() > 1 && o->name[0] == '~') {
      std::vector<Term> ps;
      for (const auto& a : o->args) ps.push_back(unfreeze(a.body, frozen));
      return Term::meta(o->name.substr(1), std::move(ps));
    }
    std::vector<ScopedTerm> as;
    for (const auto& a : o->args) as.emplace_back(a.binders, unfreeze(a.body, frozen), a.names);
    return Term::op(o->name, o->inst, std::move(as));
  }

  const Presentation E_;
  Strategy strat_;
  mutable std::set<TypeExpr> base_candidates_;
  mutable std::vector<TypeExpr> candidates_;
  mutable std::vector<TypeExpr> base_only_;
  mutable std::chrono::steady_clock::time_point deadline_;
  mutable std::set<std::string> emitted_keys_;
  mutable std::vector<int> orig_ids_;
  mutable MetaContext orig_metas_;
  mutable bool stop_ = false;
  mutable bool budget_hit_ = false;
  mutable bool depth_pruned_ = false;
  mutable std::map<std::string, int> visited_;
};

}  // namespace soas
