#pragma once

#include "soas/bindings.hpp"
#include "soas/engine.hpp"
#include "soas/equational.hpp"
#include "soas/parse.hpp"
#include "soas/print.hpp"
#include "soas/subst.hpp"
#include "soas/term.hpp"
#include "soas/type.hpp"
#include "soas/typecheck.hpp"
