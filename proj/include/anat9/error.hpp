#pragma once

#include <stdexcept>
#include <string>

namespace anat9 {

// Data-level failure (bad file, violated precondition, inconsistent input).
// The CLI maps these to exit code 2.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw Error(what);
}

}  // namespace anat9
