#pragma once

namespace saeaudit {

inline constexpr const char* kVersion = "1.0.0";

// Bumped whenever any built-in unlearning hyperparameter default changes,
// so result records always say which defaults produced them.
inline constexpr const char* kUnlearnDefaultsVersion = "1";

}  // namespace saeaudit
