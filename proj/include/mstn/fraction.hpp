#pragma once

#include <cstdint>
#include <numeric>
#include <string>

#include "mstn/common.hpp"

namespace mstn {

// Exact rational time values. Score parsing tracks note boundaries as
// fractions of a beat until they are snapped to the tick grid, so rounding
// must never happen before the grid check.
struct Frac {
    std::int64_t num = 0;
    std::int64_t den = 1;

    Frac() = default;
    Frac(std::int64_t n, std::int64_t d = 1) : num(n), den(d) { reduce(); }

    void reduce() {
        if (den == 0) throw MalformedInput("zero denominator");
        if (den < 0) {
            num = -num;
            den = -den;
        }
        const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) {
            num /= g;
            den /= g;
        }
    }

    friend Frac operator+(Frac a, Frac b) { return {a.num * b.den + b.num * a.den, a.den * b.den}; }
    friend Frac operator-(Frac a, Frac b) { return {a.num * b.den - b.num * a.den, a.den * b.den}; }
    friend Frac operator*(Frac a, Frac b) { return {a.num * b.num, a.den * b.den}; }
    friend Frac operator/(Frac a, Frac b) {
        if (b.num == 0) throw MalformedInput("division by zero fraction");
        return {a.num * b.den, a.den * b.num};
    }
    friend bool operator==(Frac a, Frac b) { return a.num == b.num && a.den == b.den; }
    friend bool operator!=(Frac a, Frac b) { return !(a == b); }
    friend bool operator<(Frac a, Frac b) { return a.num * b.den < b.num * a.den; }
    friend bool operator<=(Frac a, Frac b) { return a.num * b.den <= b.num * a.den; }
    friend bool operator>(Frac a, Frac b) { return b < a; }
    friend bool operator>=(Frac a, Frac b) { return b <= a; }

    bool is_integer() const { return den == 1; }
    double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }

    std::string str() const {
        if (den == 1) return std::to_string(num);
        return std::to_string(num) + "/" + std::to_string(den);
    }
};

}  // namespace mstn
