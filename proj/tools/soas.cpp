// Command-line frontend: unify / check / rewrite / equal / compare / lint
// over the .soas problem-file format.

#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "soas/soas.hpp"

using json = nlohmann::json;
using namespace soas;

namespace {

bool use_color() {
  const char* e = std::getenv("SOAS_COLOR");
  std::string v = e ? e : "auto";
  if (v == "never") return false;
  return isatty(fileno(stdout));
}

std::string paint(const std::string& s, const char* code) {
  if (!use_color()) return s;
  return std::string("\033[") + code + "m" + s + "\033[0m";
}
std::string green(const std::string& s) { return paint(s, "32"); }
std::string red(const std::string& s) { return paint(s, "31"); }
std::string yellow(const std::string& s) { return paint(s, "33"); }

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Loaded {
  ProblemFile file;
  const NamedProblem* problem = nullptr;
};

Loaded load(const std::string& path, const std::string& problem_name) {
  Loaded l;
  l.file = parse_file(slurp(path));
  if (!problem_name.empty()) {
    l.problem = l.file.find_problem(problem_name);
    if (!l.problem) throw std::runtime_error("no problem named '" + problem_name + "' in " + path);
  }
  return l;
}

void print_lint(const Presentation& pres) {
  for (const auto& w : mixed_operator_lint(pres.sig))
    std::cout << yellow("warning: ") << w.message << "\n";
}

// Shared strategy options for subcommands that run the search.
struct StrategyOpts {
  Strategy strat;
  std::string strategy_name = "fair";
  std::string iterate = "on";
  std::string eliminate_star = "on";

  void attach(CLI::App* cmd) {
    cmd->add_option("--max-solutions", strat.max_solutions, "stop after this many solutions");
    cmd->add_option("--max-mutations", strat.max_mutations, "mutate applications per branch");
    cmd->add_option("--max-bindings", strat.max_bindings, "total bindings per branch");
    cmd->add_option("--max-nonshrinking", strat.max_nonshrinking,
                    "non-shrinking bindings per branch");
    cmd->add_option("--iterate", iterate, "enable iteration bindings (on|off)")
        ->check(CLI::IsMember({"on", "off"}));
    cmd->add_option("--eliminate-star", eliminate_star,
                    "enable solved-form elimination (on|off)")
        ->check(CLI::IsMember({"on", "off"}));
    cmd->add_option("--iter-type-depth", strat.iter_type_depth,
                    "constructor-closure depth for iteration types");
    cmd->add_option("--strategy", strategy_name, "search discipline")
        ->check(CLI::IsMember({"fair", "best-first", "depth-first"}));
    cmd->add_option("--seed", strat.seed, "random seed (search itself is deterministic)");
    cmd->add_option("--wall-clock", strat.wall_clock_seconds, "time limit in seconds");
  }

  Strategy resolve() {
    strat.enable_iterate = iterate == "on";
    strat.enable_eliminate_star = eliminate_star == "on";
    strat.kind = strategy_name == "best-first"    ? Strategy::Kind::BestFirst
                 : strategy_name == "depth-first" ? Strategy::Kind::DepthFirst
                                                  : Strategy::Kind::Fair;
    return strat;
  }
};

int cmd_unify(const std::string& path, const std::string& problem_name, StrategyOpts& opts,
              bool trace, bool as_json) {
  Loaded l = load(path, problem_name);
  if (!as_json) print_lint(l.file.pres);
  Strategy strat = opts.resolve();
  Engine eng(l.file.pres, strat);
  const NamedProblem& P = *l.problem;
  json out;
  out["file"] = path;
  out["problem"] = P.name;
  out["solutions"] = json::array();
  int count = 0;
  SolveResult r = eng.solve(P.problem(), [&](const Solution& s) {
    ++count;
    if (as_json) {
      json js;
      js["substitution"] = subst_to_file_text(P, s.unifier);
      json entries = json::object();
      for (const auto& [name, body] : s.unifier.map)
        entries[name] = subst_entry_to_string(name, body);
      js["entries"] = entries;
      js["bindings"] = s.bindings;
      js["mutations"] = s.mutations;
      js["trace"] = s.trace;
      out["solutions"].push_back(std::move(js));
    } else {
      std::cout << green("solution " + std::to_string(count) + ": ")
                << subst_to_string(s.unifier) << "\n";
      std::cout << "  bindings=" << s.bindings << " mutations=" << s.mutations << "\n";
      if (trace)
        for (const auto& ln : s.trace) std::cout << "  " << ln << "\n";
    }
    return true;
  });
  if (as_json) {
    out["solutions_found"] = r.solutions;
    out["budget_exhausted"] = r.budget_exhausted;
    out["nodes_expanded"] = r.nodes_expanded;
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << "solutions=" << r.solutions << " nodes=" << r.nodes_expanded
              << (r.budget_exhausted ? " (budget exhausted on some branches)" : "") << "\n";
  }
  if (r.solutions > 0) return 0;
  return 2;
}

int cmd_check(const std::string& path, const std::string& problem_name,
              const std::string& subst_path, int budget) {
  Loaded l = load(path, problem_name);
  const NamedProblem& P = *l.problem;
  std::string text = slurp(subst_path);
  // Accept either the plain substitution format or the JSON emitted by
  // `unify --json`; for JSON, every reported solution must verify.
  std::vector<std::string> subst_texts;
  size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json j = json::parse(text);
    for (const auto& s : j.at("solutions")) subst_texts.push_back(s.at("substitution"));
    if (subst_texts.empty()) {
      std::cout << "no solutions in JSON input\n";
      return 3;
    }
  } else {
    subst_texts.push_back(text);
  }
  Engine eng(l.file.pres, Strategy{});
  EqualBudget eb;
  eb.max_steps = budget;
  bool all_ok = true;
  for (size_t i = 0; i < subst_texts.size(); ++i) {
    MetaSubstitution xi = parse_subst_file(l.file, P, subst_texts[i]);
    CheckResult r = eng.check_unifier(P.problem(), xi, eb);
    std::string label = subst_texts.size() > 1 ? "solution " + std::to_string(i + 1) + ": " : "";
    if (r.status == CheckResult::Status::Verified) {
      std::cout << label << green("Verified") << "\n";
      for (size_t k = 0; k < r.certificates.size(); ++k) {
        std::cout << "constraint " << k + 1 << ":\n"
                  << certificate_to_string(r.certificates[k], P.ctx);
      }
    } else {
      all_ok = false;
      std::cout << label
                << (r.status == CheckResult::Status::Refuted ? red("Refuted")
                                                             : yellow("Unknown"))
                << (r.message.empty() ? "" : ": " + r.message) << "\n";
    }
  }
  return all_ok ? 0 : 3;
}

// Terms whose operator instantiations cannot be inferred bottom-up (e.g. a
// lambda whose binder type nothing pins down) can be checked against an
// explicitly supplied type instead.
std::pair<Term, TypeExpr> parse_term_maybe_typed(const ProblemFile& f, const MetaContext& metas,
                                                 const VarContext& ctx, const std::string& text,
                                                 const std::string& type_text) {
  if (!type_text.empty()) {
    TypeExpr ty = parse_type_string(f, type_text);
    return {parse_term_checked(f, metas, ctx, text, ty), ty};
  }
  return parse_term_string(f, metas, ctx, text);
}

int cmd_rewrite(const std::string& path, const std::string& problem_name,
                const std::string& term_text, const std::string& ctx_text,
                const std::string& type_text, int steps) {
  Loaded l = load(path, problem_name);
  MetaContext metas = l.problem ? l.problem->metas : MetaContext{};
  VarContext ctx = l.problem && ctx_text.empty() ? l.problem->ctx
                                                 : parse_context_string(l.file, ctx_text);
  auto [term, type] = parse_term_maybe_typed(l.file, metas, ctx, term_text, type_text);
  if (steps <= 0) {
    auto opts = rewrite_once(l.file.pres, term);
    if (opts.empty()) {
      std::cout << "no rewrites (normal form)\n";
      return 0;
    }
    for (const auto& st : opts) {
      std::cout << st.axiom << (st.dir == RewriteDir::LeftToRight ? " ->" : " <-") << " at [";
      for (size_t i = 0; i < st.path.size(); ++i) std::cout << (i ? "," : "") << st.path[i];
      std::cout << "]: " << term_to_string(st.after, ctx) << "\n";
    }
    return 0;
  }
  // Normalizing chain: repeatedly apply the first available oriented axiom
  // left-to-right.
  Term cur = term;
  std::cout << term_to_string(cur, ctx) << "\n";
  for (int i = 0; i < steps; ++i) {
    auto opts = rewrite_once(l.file.pres, cur);
    const RewriteStep* chosen = nullptr;
    for (const auto& st : opts) {
      const Axiom* ax = l.file.pres.find_axiom(st.axiom);
      if (ax && ax->oriented && st.dir == RewriteDir::LeftToRight) {
        chosen = &st;
        break;
      }
    }
    if (!chosen) {
      std::cout << "(no oriented rewrite applies)\n";
      break;
    }
    cur = chosen->after;
    std::cout << i + 1 << ". " << chosen->axiom << " ->: " << term_to_string(cur, ctx) << "\n";
  }
  return 0;
}

int cmd_equal(const std::string& path, const std::string& problem_name,
              const std::string& left_text, const std::string& right_text,
              const std::string& ctx_text, const std::string& type_text, int budget) {
  Loaded l = load(path, problem_name);
  MetaContext metas = l.problem ? l.problem->metas : MetaContext{};
  VarContext ctx = l.problem && ctx_text.empty() ? l.problem->ctx
                                                 : parse_context_string(l.file, ctx_text);
  auto [lt, ltype] = parse_term_maybe_typed(l.file, metas, ctx, left_text, type_text);
  auto [rt, rtype] = parse_term_maybe_typed(l.file, metas, ctx, right_text, type_text);
  if (ltype != rtype)
    throw std::runtime_error("sides have different types: " + type_to_string(ltype) + " vs " +
                             type_to_string(rtype));
  EqualBudget eb;
  eb.max_steps = budget;
  auto cert = equal_modulo(l.file.pres, lt, rt, eb);
  if (!cert) {
    std::cout << yellow("Unknown") << ": no certificate within budget " << budget << "\n";
    return 3;
  }
  std::cout << green("Equal") << " (" << cert->steps.size() << " steps)\n"
            << certificate_to_string(*cert, ctx);
  return 0;
}

int cmd_compare(const std::string& path, const std::string& problem_name,
                const std::string& theta_path, const std::string& xi_path, int budget) {
  Loaded l = load(path, problem_name);
  const NamedProblem& P = *l.problem;
  MetaSubstitution theta = parse_subst_file(l.file, P, slurp(theta_path));
  MetaSubstitution xi = parse_subst_file(l.file, P, slurp(xi_path));
  Engine eng(l.file.pres, Strategy{});
  auto report = [&](const char* label, const MetaSubstitution& a, const MetaSubstitution& b) {
    SubsumeResult r = eng.subsumes(P.metas, a, b, budget);
    if (r.witnessed)
      std::cout << label << ": " << green("Witness ") << subst_to_string(r.witness) << "\n";
    else
      std::cout << label << ": " << yellow("Unknown") << "\n";
  };
  report("theta <= xi", theta, xi);
  report("xi <= theta", xi, theta);
  return 0;
}

int cmd_lint(const std::string& path) {
  Loaded l = load(path, "");
  int warnings = 0;
  for (const auto& w : mixed_operator_lint(l.file.pres.sig)) {
    std::cout << yellow("warning: ") << w.message << "\n";
    ++warnings;
  }
  for (const auto& ax : l.file.pres.axioms) {
    auto bare = [](const Term& t) {
      const auto* m = t.as_meta();
      if (!m) return false;
      for (const auto& p : m->params)
        if (!p.as_var()) return false;
      return true;
    };
    if (bare(ax.lhs) && bare(ax.rhs)) {
      std::cout << yellow("warning: ") << "axiom '" << ax.name
                << "' is degenerate (metavariable on both sides); "
                   "it relates arbitrary terms of its type\n";
      ++warnings;
    }
  }
  if (warnings == 0) std::cout << "no warnings\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"E-unification for second-order abstract syntax"};
  app.require_subcommand(1);

  std::string file, problem, subst, term, left, right, theta, xi, context, type;
  int budget = 8, steps = 0;
  bool trace = false, as_json = false;
  StrategyOpts opts;

  CLI::App* unify = app.add_subcommand("unify", "search for E-unifiers of a named problem");
  unify->add_option("file", file, "problem file")->required();
  unify->add_option("--problem", problem, "problem name")->required();
  opts.attach(unify);
  unify->add_flag("--trace", trace, "print the rule trace of each solution");
  unify->add_flag("--json", as_json, "machine-readable output");

  CLI::App* check = app.add_subcommand("check", "verify a substitution is an E-unifier");
  check->add_option("file", file, "problem file")->required();
  check->add_option("--problem", problem, "problem name")->required();
  check->add_option("--subst", subst, "substitution file (plain or unify --json output)")
      ->required();
  check->add_option("--budget", budget, "certificate search budget");

  CLI::App* rewrite = app.add_subcommand("rewrite", "show one-step rewrites or a normalizing chain");
  rewrite->add_option("file", file, "problem file")->required();
  rewrite->add_option("--term", term, "term to rewrite")->required();
  rewrite->add_option("--context", context, "variable context, e.g. \"x : s, y : t\"");
  rewrite->add_option("--problem", problem, "borrow a problem's contexts");
  rewrite->add_option("--type", type, "expected type of the term (when inference is ambiguous)");
  rewrite->add_option("--steps", steps, "apply oriented axioms this many times");

  CLI::App* equal = app.add_subcommand("equal", "certify two terms equal modulo the axioms");
  equal->add_option("file", file, "problem file")->required();
  equal->add_option("--left", left, "left term")->required();
  equal->add_option("--right", right, "right term")->required();
  equal->add_option("--context", context, "variable context");
  equal->add_option("--problem", problem, "borrow a problem's contexts");
  equal->add_option("--type", type, "expected type of both terms (when inference is ambiguous)");
  equal->add_option("--budget", budget, "certificate search budget");

  CLI::App* compare = app.add_subcommand("compare", "compare two unifiers for subsumption");
  compare->add_option("file", file, "problem file")->required();
  compare->add_option("--problem", problem, "problem name")->required();
  compare->add_option("--theta", theta, "first substitution file")->required();
  compare->add_option("--xi", xi, "second substitution file")->required();
  compare->add_option("--budget", budget, "binding budget for the witness search");

  CLI::App* lint = app.add_subcommand("lint", "signature and axiom warnings");
  lint->add_option("file", file, "problem file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (unify->parsed()) return cmd_unify(file, problem, opts, trace, as_json);
    if (check->parsed()) return cmd_check(file, problem, subst, budget);
    if (rewrite->parsed()) return cmd_rewrite(file, problem, term, context, type, steps);
    if (equal->parsed()) return cmd_equal(file, problem, left, right, context, type, budget);
    if (compare->parsed()) return cmd_compare(file, problem, theta, xi, budget);
    if (lint->parsed()) return cmd_lint(file);
  } catch (const std::exception& e) {
    std::cerr << red("error: ") << e.what() << "\n";
    return 1;
  }
  return 1;
}
