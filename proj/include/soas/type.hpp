#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace soas {

// A type expression: either a constructor applied to arguments (a base sort
// is a nullary constructor) or a schematic type variable. Schematic variables
// appear only inside operator and axiom declarations.
struct TypeExpr {
  enum class Kind { Con, Var };
  Kind kind = Kind::Con;
  std::string name;
  std::vector<TypeExpr> args;

  static TypeExpr con(std::string n, std::vector<TypeExpr> as = {}) {
    TypeExpr t;
    t.kind = Kind::Con;
    t.name = std::move(n);
    t.args = std::move(as);
    return t;
  }
  static TypeExpr var(std::string n) {
    TypeExpr t;
    t.kind = Kind::Var;
    t.name = std::move(n);
    return t;
  }

  bool operator==(const TypeExpr& o) const {
    return kind == o.kind && name == o.name && args == o.args;
  }
  bool operator!=(const TypeExpr& o) const { return !(*this == o); }
  bool operator<(const TypeExpr& o) const {
    if (kind != o.kind) return kind < o.kind;
    if (name != o.name) return name < o.name;
    return args < o.args;
  }
};

inline bool type_is_ground(const TypeExpr& t) {
  if (t.kind == TypeExpr::Kind::Var) return false;
  for (const auto& a : t.args)
    if (!type_is_ground(a)) return false;
  return true;
}

inline void collect_type_vars(const TypeExpr& t, std::set<std::string>& out) {
  if (t.kind == TypeExpr::Kind::Var) out.insert(t.name);
  for (const auto& a : t.args) collect_type_vars(a, out);
}

// Assignment of schematic type variables to type expressions.
using TypeAssignment = std::map<std::string, TypeExpr>;

inline TypeExpr apply_type_assignment(const TypeExpr& t, const TypeAssignment& a) {
  if (t.kind == TypeExpr::Kind::Var) {
    auto it = a.find(t.name);
    if (it != a.end()) return it->second;
    return t;
  }
  TypeExpr r = t;
  for (auto& arg : r.args) arg = apply_type_assignment(arg, a);
  return r;
}

// First-order matching: bind variables of `pattern` so it equals `subject`.
// Extends `a` in place; returns false (leaving `a` possibly extended) on clash.
inline bool match_type(const TypeExpr& pattern, const TypeExpr& subject, TypeAssignment& a) {
  if (pattern.kind == TypeExpr::Kind::Var) {
    auto it = a.find(pattern.name);
    if (it != a.end()) return it->second == subject;
    a[pattern.name] = subject;
    return true;
  }
  if (subject.kind != TypeExpr::Kind::Con) return false;
  if (pattern.name != subject.name || pattern.args.size() != subject.args.size()) return false;
  for (size_t i = 0; i < pattern.args.size(); ++i)
    if (!match_type(pattern.args[i], subject.args[i], a)) return false;
  return true;
}

// One argument slot of an operator: binds `binders` variables of the given
// types inside a body of type `body`.
struct ArgArity {
  std::vector<TypeExpr> binders;
  TypeExpr body;

  bool operator==(const ArgArity& o) const { return binders == o.binders && body == o.body; }
};

struct OperatorDecl {
  std::string name;
  std::vector<std::string> type_vars;  // schematic variables, in declaration order
  std::vector<ArgArity> args;
  TypeExpr result;
};

struct TypeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Signature {
  std::set<std::string> sorts;
  std::map<std::string, int> type_constructors;  // name -> arity
  std::map<std::string, OperatorDecl> operators;

  bool has_type_con(const std::string& n) const {
    return sorts.count(n) || type_constructors.count(n);
  }
  int type_con_arity(const std::string& n) const {
    if (sorts.count(n)) return 0;
    auto it = type_constructors.find(n);
    if (it == type_constructors.end()) throw TypeError("unknown type constructor: " + n);
    return it->second;
  }
  const OperatorDecl& op(const std::string& n) const {
    auto it = operators.find(n);
    if (it == operators.end()) throw TypeError("unknown operator: " + n);
    return it->second;
  }

  // Checks a type expression mentions only declared sorts/constructors and the
  // given schematic variables, with correct constructor arities.
  void check_type(const TypeExpr& t, const std::set<std::string>& tvars = {}) const {
    if (t.kind == TypeExpr::Kind::Var) {
      if (!tvars.count(t.name))
        throw TypeError("unbound schematic type variable: " + t.name);
      return;
    }
    if (!has_type_con(t.name)) throw TypeError("unknown sort or type constructor: " + t.name);
    if ((int)t.args.size() != type_con_arity(t.name))
      throw TypeError("type constructor arity mismatch for " + t.name);
    for (const auto& a : t.args) check_type(a, tvars);
  }
};

struct LintWarning {
  std::string op_name;
  std::string message;
};

// An operator is mixed when it has both a binding and a non-binding argument.
// The completeness guarantee of the search assumes such operators are absent.
inline std::vector<LintWarning> mixed_operator_lint(const Signature& sig) {
  std::vector<LintWarning> out;
  for (const auto& [name, decl] : sig.operators) {
    bool has_zero = false, has_nonzero = false;
    for (const auto& a : decl.args) {
      if (a.binders.empty())
        has_zero = true;
      else
        has_nonzero = true;
    }
    if (has_zero && has_nonzero) {
      out.push_back({name, "operator '" + name +
                               "' is mixed (has both binding and non-binding arguments); "
                               "the search may miss solutions on signatures with mixed operators"});
    }
  }
  return out;
}

struct MetaDecl {
  std::string name;
  std::vector<TypeExpr> params;
  TypeExpr result;

  bool operator==(const MetaDecl& o) const {
    return name == o.name && params == o.params && result == o.result;
  }
};

// Ordered metavariable context. The declaration list is immutable and shared
// between copies; mutation replaces it (contexts are copied far more often
// than they are extended).
struct MetaContext {
  MetaContext() = default;
  explicit MetaContext(std::vector<MetaDecl> ds)
      : data_(std::make_shared<const std::vector<MetaDecl>>(std::move(ds))) {}

  const std::vector<MetaDecl>& decls() const {
    static const std::vector<MetaDecl> empty;
    return data_ ? *data_ : empty;
  }
  bool contains(const std::string& n) const { return find(n) != nullptr; }
  const MetaDecl* find(const std::string& n) const {
    for (const auto& d : decls())
      if (d.name == n) return &d;
    return nullptr;
  }
  const MetaDecl& get(const std::string& n) const {
    const MetaDecl* d = find(n);
    if (!d) throw TypeError("unknown metavariable: " + n);
    return *d;
  }
  void add(MetaDecl d) {
    if (contains(d.name)) throw TypeError("duplicate metavariable: " + d.name);
    std::vector<MetaDecl> ds = decls();
    ds.push_back(std::move(d));
    data_ = std::make_shared<const std::vector<MetaDecl>>(std::move(ds));
  }
  void extend(const MetaContext& other) {
    for (const auto& d : other.decls()) add(d);
  }
  std::set<std::string> names() const {
    std::set<std::string> s;
    for (const auto& d : decls()) s.insert(d.name);
    return s;
  }

 private:
  std::shared_ptr<const std::vector<MetaDecl>> data_;
};

// Variable context: position in the vector determines the de Bruijn level;
// the *last* element is the innermost variable (index 0). The payload is
// immutable and shared between copies; contexts are copied with every
// constraint, so copying must stay O(1).
struct VarContext {
  struct Data {
    std::vector<TypeExpr> types;
    std::vector<std::string> names;  // display only; may be empty or parallel to types
  };

  size_t size() const { return data_ ? data_->types.size() : 0; }
  const std::vector<TypeExpr>& types() const {
    static const std::vector<TypeExpr> empty;
    return data_ ? data_->types : empty;
  }
  const std::vector<std::string>& names() const {
    static const std::vector<std::string> empty;
    return data_ ? data_->names : empty;
  }
  // Type of the variable with de Bruijn index i (0 = innermost).
  const TypeExpr& type_of_index(int i) const {
    const auto& ts = types();
    if (i < 0 || i >= (int)ts.size()) throw TypeError("variable index out of range");
    return ts[ts.size() - 1 - (size_t)i];
  }
  std::string name_of_index(int i) const {
    const auto& ts = types();
    const auto& ns = names();
    if (ns.size() == ts.size() && i >= 0 && i < (int)ts.size())
      return ns[ts.size() - 1 - (size_t)i];
    return "x" + std::to_string((int)ts.size() - 1 - i);
  }
  void push(TypeExpr t, std::string name = "") {
    Data d = data_ ? *data_ : Data{};
    d.types.push_back(std::move(t));
    if (d.names.size() + 1 == d.types.size())
      d.names.push_back(name.empty() ? "x" + std::to_string(d.types.size() - 1)
                                     : std::move(name));
    else if (!name.empty() && d.names.size() == d.types.size() - 1)
      d.names.push_back(std::move(name));
    data_ = std::make_shared<const Data>(std::move(d));
  }
  VarContext extended(const std::vector<TypeExpr>& binder_types,
                      const std::vector<std::string>& binder_names = {}) const {
    Data d = data_ ? *data_ : Data{};
    if (d.names.size() != d.types.size()) {
      d.names.clear();
      for (size_t i = 0; i < d.types.size(); ++i) d.names.push_back("x" + std::to_string(i));
    }
    for (size_t i = 0; i < binder_types.size(); ++i) {
      d.types.push_back(binder_types[i]);
      d.names.push_back(i < binder_names.size() && !binder_names[i].empty()
                            ? binder_names[i]
                            : "x" + std::to_string(d.types.size() - 1));
    }
    VarContext c;
    c.data_ = std::make_shared<const Data>(std::move(d));
    return c;
  }

 private:
  std::shared_ptr<const Data> data_;
};

inline std::string type_to_string(const TypeExpr& t);

namespace detail {
inline void type_to_string_rec(const TypeExpr& t, std::ostream& os, int prec) {
  // prec: 0 = arrow position (loosest), 1 = product operand, 2 = atom
  if (t.kind == TypeExpr::Kind::Var) {
    os << t.name;
    return;
  }
  if (t.name == "arrow" && t.args.size() == 2) {
    if (prec > 0) os << "(";
    type_to_string_rec(t.args[0], os, 1);
    os << " -> ";
    type_to_string_rec(t.args[1], os, 0);
    if (prec > 0) os << ")";
    return;
  }
  if (t.name == "prod" && t.args.size() == 2) {
    if (prec > 1) os << "(";
    type_to_string_rec(t.args[0], os, 2);
    os << " * ";
    type_to_string_rec(t.args[1], os, 2);
    if (prec > 1) os << ")";
    return;
  }
  os << t.name;
  if (!t.args.empty()) {
    os << "(";
    for (size_t i = 0; i < t.args.size(); ++i) {
      if (i) os << ", ";
      type_to_string_rec(t.args[i], os, 0);
    }
    os << ")";
  }
}
}  // namespace detail

inline std::string type_to_string(const TypeExpr& t) {
  std::ostringstream os;
  detail::type_to_string_rec(t, os, 0);
  return os.str();
}

}  // namespace soas
