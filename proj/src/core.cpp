#include "fmi/core.hpp"

#include <algorithm>

namespace fmi {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::PeerFailure: return "PeerFailure";
    case ErrorKind::ChannelFailure: return "ChannelFailure";
    case ErrorKind::MessageTooLarge: return "MessageTooLarge";
    case ErrorKind::ProtocolViolation: return "ProtocolViolation";
    case ErrorKind::JoinFailed: return "JoinFailed";
    case ErrorKind::RetriesExhausted: return "RetriesExhausted";
  }
  return "Unknown";
}

std::string_view to_string(TypeKind kind) noexcept {
  switch (kind) {
    case TypeKind::int32: return "int32";
    case TypeKind::int64: return "int64";
    case TypeKind::float64: return "float64";
    case TypeKind::byte: return "byte";
  }
  return "unknown";
}

FmiError::FmiError(ErrorKind kind, const std::string& detail)
    : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind), detail_(detail) {}

DataBuffer::DataBuffer(Datatype dtype, Bytes bytes) : dtype_(dtype), bytes_(std::move(bytes)) {
  if (bytes_.size() % dtype_.width() != 0) {
    throw FmiError(ErrorKind::ProtocolViolation,
                   "buffer of " + std::to_string(bytes_.size()) + " bytes is not a whole number of " +
                       std::string(to_string(dtype_.kind())) + " elements");
  }
}

ReductionOp::ReductionOp(std::string name, bool commutative, Kernel kernel)
    : name_(std::move(name)), commutative_(commutative), kernel_(std::move(kernel)) {}

namespace {

// Integer arithmetic goes through the unsigned type so overflow wraps instead
// of being undefined.
template <class T>
struct Wrapping {
  using U = std::make_unsigned_t<T>;
  static T add(T a, T b) { return static_cast<T>(static_cast<U>(a) + static_cast<U>(b)); }
  static T mul(T a, T b) { return static_cast<T>(static_cast<U>(a) * static_cast<U>(b)); }
};

template <>
struct Wrapping<double> {
  static double add(double a, double b) { return a + b; }
  static double mul(double a, double b) { return a * b; }
};

template <class T, class F>
void elementwise(std::span<const std::byte> lhs, std::span<const std::byte> rhs, std::span<std::byte> out,
                 F fn) {
  const std::size_t n = lhs.size() / sizeof(T);
  for (std::size_t i = 0; i < n; ++i) {
    T a, b;
    std::memcpy(&a, lhs.data() + i * sizeof(T), sizeof(T));
    std::memcpy(&b, rhs.data() + i * sizeof(T), sizeof(T));
    const T r = fn(a, b);
    std::memcpy(out.data() + i * sizeof(T), &r, sizeof(T));
  }
}

template <class Fn>
ReductionOp::Kernel typed_kernel(Fn fn) {
  return [fn](Datatype dtype, std::span<const std::byte> lhs, std::span<const std::byte> rhs,
              std::span<std::byte> out) {
    switch (dtype.kind()) {
      case TypeKind::int32: elementwise<std::int32_t>(lhs, rhs, out, fn.template operator()<std::int32_t>()); break;
      case TypeKind::int64: elementwise<std::int64_t>(lhs, rhs, out, fn.template operator()<std::int64_t>()); break;
      case TypeKind::float64: elementwise<double>(lhs, rhs, out, fn.template operator()<double>()); break;
      case TypeKind::byte: elementwise<std::uint8_t>(lhs, rhs, out, fn.template operator()<std::uint8_t>()); break;
    }
  };
}

}  // namespace

ReductionOp ReductionOp::sum() {
  return ReductionOp("sum", true, typed_kernel([]<class T>() {
                       if constexpr (std::is_same_v<T, std::uint8_t>) {
                         return [](T a, T b) { return static_cast<T>(a + b); };
                       } else {
                         return [](T a, T b) { return Wrapping<T>::add(a, b); };
                       }
                     }));
}

ReductionOp ReductionOp::prod() {
  return ReductionOp("prod", true, typed_kernel([]<class T>() {
                       if constexpr (std::is_same_v<T, std::uint8_t>) {
                         return [](T a, T b) { return static_cast<T>(a * b); };
                       } else {
                         return [](T a, T b) { return Wrapping<T>::mul(a, b); };
                       }
                     }));
}

ReductionOp ReductionOp::min() {
  return ReductionOp("min", true, typed_kernel([]<class T>() { return [](T a, T b) { return std::min(a, b); }; }));
}

ReductionOp ReductionOp::max() {
  return ReductionOp("max", true, typed_kernel([]<class T>() { return [](T a, T b) { return std::max(a, b); }; }));
}

ReductionOp ReductionOp::noop() {
  return ReductionOp("noop", true,
                     [](Datatype, std::span<const std::byte>, std::span<const std::byte>, std::span<std::byte> out) {
                       std::fill(out.begin(), out.end(), std::byte{0});
                     });
}

DataBuffer apply_reduce(const ReductionOp& op, const DataBuffer& a, const DataBuffer& b) {
  if (a.dtype() != b.dtype() || a.count() != b.count()) {
    throw FmiError(ErrorKind::ProtocolViolation,
                   "reduce operands differ: " + std::to_string(a.count()) + " " +
                       std::string(to_string(a.dtype().kind())) + " vs " + std::to_string(b.count()) + " " +
                       std::string(to_string(b.dtype().kind())));
  }
  Bytes out(a.size_bytes());
  if (!out.empty()) op.kernel()(a.dtype(), a.bytes(), b.bytes(), out);
  return DataBuffer(a.dtype(), std::move(out));
}

}  // namespace fmi
