#pragma once

// The anomaly curve A * t * exp(-B * t^C) / Z evaluated with 50 decimal digits.

#include <boost/multiprecision/cpp_dec_float.hpp>

namespace oracle {

using Decimal = boost::multiprecision::cpp_dec_float_50;

inline Decimal curve(const Decimal& A, const Decimal& B, const Decimal& C, const Decimal& Z, const Decimal& t) {
    if (t == 0) return Decimal(0);
    return A * t * boost::multiprecision::exp(-B * boost::multiprecision::pow(t, C)) / Z;
}

inline double mean_curve(double t) {
    return static_cast<double>(
        curve(Decimal(74120), Decimal("0.385"), Decimal("0.806"), Decimal(90409), Decimal(t)));
}

}  // namespace oracle
