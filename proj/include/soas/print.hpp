#pragma once

#include "soas/subst.hpp"

namespace soas {

// ---------------------------------------------------------------------------
// Canonical (machine) serialization: used for hashing/dedup, never parsed back.
// ---------------------------------------------------------------------------

inline void canon_type(const TypeExpr& t, std::ostream& os) {
  os << (t.kind == TypeExpr::Kind::Var ? "?" : "") << t.name;
  if (!t.args.empty()) {
    os << "(";
    for (size_t i = 0; i < t.args.size(); ++i) {
      if (i) os << ",";
      canon_type(t.args[i], os);
    }
    os << ")";
  }
}

// `rename` maps metavariable names to canonical placeholders; when non-null,
// unseen names are assigned placeholders in order of first occurrence.
inline void canon_term(const Term& t, std::ostream& os,
                       std::map<std::string, std::string>* rename = nullptr) {
  if (const auto* v = t.as_var()) {
    os << "#" << v->index;
    return;
  }
  if (const auto* m = t.as_meta()) {
    std::string name = m->name;
    if (rename) {
      auto it = rename->find(name);
      if (it == rename->end()) {
        std::string ph = "$" + std::to_string(rename->size());
        it = rename->emplace(name, ph).first;
      }
      name = it->second;
    }
    os << name << "[";
    for (size_t i = 0; i < m->params.size(); ++i) {
      if (i) os << ",";
      canon_term(m->params[i], os, rename);
    }
    os << "]";
    return;
  }
  const auto* o = t.as_op();
  os << o->name << "<";
  for (size_t i = 0; i < o->inst.size(); ++i) {
    if (i) os << ",";
    canon_type(o->inst[i], os);
  }
  os << ">(";
  for (size_t i = 0; i < o->args.size(); ++i) {
    if (i) os << ",";
    os << o->args[i].binders << ".";
    canon_term(o->args[i].body, os, rename);
  }
  os << ")";
}

inline std::string canon_term_key(const Term& t) {
  std::ostringstream os;
  canon_term(t, os);
  return os.str();
}

// ---------------------------------------------------------------------------
// Human-readable pretty printer (round-trips through the parser).
// ---------------------------------------------------------------------------

namespace detail {

// `names` is the full stack of display names, innermost last.
inline void print_term_rec(const Term& t, std::ostream& os, std::vector<std::string>& names) {
  if (const auto* v = t.as_var()) {
    int pos = (int)names.size() - 1 - v->index;
    if (pos < 0)
      os << "?v" << v->index;  // out of scope; should not happen on checked terms
    else
      os << names[(size_t)pos];
    return;
  }
  if (const auto* m = t.as_meta()) {
    os << m->name << "[";
    for (size_t i = 0; i < m->params.size(); ++i) {
      if (i) os << ", ";
      print_term_rec(m->params[i], os, names);
    }
    os << "]";
    return;
  }
  const auto* o = t.as_op();
  os << o->name << "(";
  for (size_t i = 0; i < o->args.size(); ++i) {
    if (i) os << ", ";
    const ScopedTerm& a = o->args[i];
    size_t base = names.size();
    for (int b = 0; b < a.binders; ++b) {
      std::string hint = b < (int)a.names.size() ? a.names[(size_t)b] : "";
      if (hint.empty()) hint = "x" + std::to_string(names.size());
      // Disambiguate shadowed names so printing round-trips.
      std::string n = hint;
      int suffix = 0;
      while (std::find(names.begin(), names.end(), n) != names.end())
        n = hint + std::to_string(++suffix);
      names.push_back(n);
    }
    if (a.binders > 0) {
      for (int b = 0; b < a.binders; ++b) {
        if (b) os << " ";
        os << names[base + (size_t)b];
      }
      os << ". ";
    }
    print_term_rec(a.body, os, names);
    names.resize(base);
  }
  os << ")";
  if (o->args.empty()) return;
}

}  // namespace detail

inline std::string term_to_string(const Term& t, const VarContext& ctx = {}) {
  std::vector<std::string> names;
  for (size_t i = 0; i < ctx.size(); ++i) {
    names.push_back(ctx.names().size() == ctx.types().size() ? ctx.names()[i]
                                                         : "x" + std::to_string(i));
  }
  std::ostringstream os;
  detail::print_term_rec(t, os, names);
  return os.str();
}

inline std::string meta_decl_to_string(const MetaDecl& d) {
  std::ostringstream os;
  os << d.name << " : [";
  for (size_t i = 0; i < d.params.size(); ++i) {
    if (i) os << ", ";
    os << type_to_string(d.params[i]);
  }
  os << "]" << type_to_string(d.result);
  return os.str();
}

// Prints one substitution entry as `M[z1, z2] |-> body`.
inline std::string subst_entry_to_string(const std::string& name, const ScopedTerm& body) {
  std::ostringstream os;
  os << name << "[";
  std::vector<std::string> names;
  for (int i = 0; i < body.binders; ++i) {
    std::string n = i < (int)body.names.size() && !body.names[(size_t)i].empty()
                        ? body.names[(size_t)i]
                        : "z" + std::to_string(i + 1);
    names.push_back(n);
    if (i) os << ", ";
    os << n;
  }
  os << "] |-> ";
  detail::print_term_rec(body.body, os, names);
  return os.str();
}

inline std::string subst_to_string(const MetaSubstitution& th) {
  std::ostringstream os;
  os << "[";
  bool first = true;
  for (const auto& [name, body] : th.map) {
    if (!first) os << ", ";
    first = false;
    os << subst_entry_to_string(name, body);
  }
  os << "]";
  return os.str();
}

inline std::string canon_subst_key(const MetaSubstitution& th) {
  // Canonical up to renaming of codomain metavariables: serialize entries in
  // domain-name order, renaming codomain metavariables by first occurrence.
  std::map<std::string, std::string> rename;
  std::ostringstream os;
  for (const auto& [name, body] : th.map) {
    os << name << "/" << body.binders << ":";
    canon_term(body.body, os, &rename);
    os << ";";
  }
  return os.str();
}

}  // namespace soas
