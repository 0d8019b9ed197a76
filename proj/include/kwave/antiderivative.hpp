#pragma once

#include <optional>
#include <string_view>

#include "kwave/expr.hpp"

namespace kwave {

/// Antiderivative in `var` for a small set of recognized shapes (other symbols are constants).
/// Returns nullopt when the shape is not recognized.
std::optional<Expr> antiderivative(const Expr& e, std::string_view var);

}  // namespace kwave
