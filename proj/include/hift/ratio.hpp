#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace hift {

// Exact rational arithmetic for the analytic memory estimators. Byte budgets
// like (k+3)/k * zeta1 must survive comparison without float rounding, so the
// estimators compute on Ratio and convert to double only for display.
class Ratio {
  public:
    constexpr Ratio() : num_(0), den_(1) {}
    constexpr Ratio(std::int64_t value) : num_(value), den_(1) {}
    Ratio(std::int64_t num, std::int64_t den) : num_(num), den_(den) { normalize(); }

    std::int64_t num() const { return num_; }
    std::int64_t den() const { return den_; }

    double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

    Ratio operator+(const Ratio& o) const { return Ratio(num_ * o.den_ + o.num_ * den_, den_ * o.den_); }
    Ratio operator-(const Ratio& o) const { return Ratio(num_ * o.den_ - o.num_ * den_, den_ * o.den_); }
    Ratio operator*(const Ratio& o) const { return Ratio(num_ * o.num_, den_ * o.den_); }
    Ratio operator/(const Ratio& o) const {
        if (o.num_ == 0) throw std::domain_error("Ratio: division by zero");
        return Ratio(num_ * o.den_, den_ * o.num_);
    }

    bool operator==(const Ratio& o) const { return num_ == o.num_ && den_ == o.den_; }
    bool operator!=(const Ratio& o) const { return !(*this == o); }
    bool operator<(const Ratio& o) const { return num_ * o.den_ < o.num_ * den_; }
    bool operator<=(const Ratio& o) const { return num_ * o.den_ <= o.num_ * den_; }
    bool operator>(const Ratio& o) const { return o < *this; }
    bool operator>=(const Ratio& o) const { return o <= *this; }

    std::string str() const {
        if (den_ == 1) return std::to_string(num_);
        return std::to_string(num_) + "/" + std::to_string(den_);
    }

  private:
    void normalize() {
        if (den_ == 0) throw std::domain_error("Ratio: zero denominator");
        if (den_ < 0) {
            num_ = -num_;
            den_ = -den_;
        }
        const std::int64_t g = std::gcd(num_ < 0 ? -num_ : num_, den_);
        if (g > 1) {
            num_ /= g;
            den_ /= g;
        }
    }

    std::int64_t num_;
    std::int64_t den_;
};

}  // namespace hift
