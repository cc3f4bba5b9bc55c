#pragma once

#include <cstdint>
#include <string_view>

namespace bastext {

/// FNV-1a, used for catalog fingerprints stored in model files.
class Fnv1a {
public:
    void update(std::string_view bytes) {
        for (unsigned char c : bytes) {
            state_ ^= c;
            state_ *= 0x100000001b3ULL;
        }
    }
    void update_separator() { update(std::string_view("\x1f", 1)); }
    std::uint64_t digest() const { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

} // namespace bastext
