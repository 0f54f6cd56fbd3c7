#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mstn {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define MSTN_DEFINE_ERROR(NAME)                                     \
    struct NAME : Error {                                           \
        explicit NAME(const std::string& msg) : Error(#NAME ": " + msg) {} \
    }

MSTN_DEFINE_ERROR(MalformedInput);
MSTN_DEFINE_ERROR(UnsupportedTimeSignature);
MSTN_DEFINE_ERROR(UnrepresentableDuration);
MSTN_DEFINE_ERROR(OutOfRange);
MSTN_DEFINE_ERROR(EmptyCorpus);
MSTN_DEFINE_ERROR(MalformedSequence);
MSTN_DEFINE_ERROR(UnknownTemplate);
MSTN_DEFINE_ERROR(SequenceTooLong);
MSTN_DEFINE_ERROR(ShapeMismatch);
MSTN_DEFINE_ERROR(NonScalarLoss);
MSTN_DEFINE_ERROR(LengthMismatch);
MSTN_DEFINE_ERROR(DivergedLoss);
MSTN_DEFINE_ERROR(MotifLengthError);

#undef MSTN_DEFINE_ERROR

// ---------------------------------------------------------------------------
// Deterministic randomness
//
// std::shuffle and the std distributions are implementation-defined; every
// stochastic choice in the pipeline goes through these helpers instead so a
// seed pins the exact result.
// ---------------------------------------------------------------------------

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double next_double() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // uniform integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) {
        // rejection sampling keeps the draw unbiased
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // standard normal via Box-Muller
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = next_double();
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[next_below(i)]);
        }
    }

  private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Thread cap shared by batch training and protocol evaluation. MSTN_THREADS
// overrides the hardware default.
inline int thread_count() {
    if (const char* env = std::getenv("MSTN_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

}  // namespace mstn
