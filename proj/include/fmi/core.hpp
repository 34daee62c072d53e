// Shared domain types: typed buffers, reduction operators and the error
// taxonomy used by every channel and collective.
#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace fmi {

static_assert(std::endian::native == std::endian::little,
              "element buffers are stored little-endian and copied verbatim");

enum class ErrorKind {
  Timeout,
  PeerFailure,
  ChannelFailure,
  MessageTooLarge,
  ProtocolViolation,
  JoinFailed,
  RetriesExhausted,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure surfaced by the library. `kind()` classifies it; `what()`
/// carries the kind name followed by the detail text.
class FmiError : public std::runtime_error {
 public:
  FmiError(ErrorKind kind, const std::string& detail);

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

enum class TypeKind : std::uint8_t { int32, int64, float64, byte };

std::string_view to_string(TypeKind kind) noexcept;

class Datatype {
 public:
  constexpr explicit Datatype(TypeKind kind) noexcept : kind_(kind) {}

  constexpr TypeKind kind() const noexcept { return kind_; }
  constexpr std::size_t width() const noexcept {
    switch (kind_) {
      case TypeKind::int32: return 4;
      case TypeKind::int64: return 8;
      case TypeKind::float64: return 8;
      case TypeKind::byte: return 1;
    }
    return 1;
  }

  template <class T>
  static constexpr Datatype of() noexcept;

  friend constexpr bool operator==(Datatype, Datatype) noexcept = default;

 private:
  TypeKind kind_;
};

template <class T>
inline constexpr bool is_element_v =
    std::is_same_v<T, std::int32_t> || std::is_same_v<T, std::int64_t> ||
    std::is_same_v<T, double> || std::is_same_v<T, std::uint8_t>;

template <class T>
constexpr Datatype Datatype::of() noexcept {
  static_assert(is_element_v<T>, "unsupported element type");
  if constexpr (std::is_same_v<T, std::int32_t>) return Datatype(TypeKind::int32);
  else if constexpr (std::is_same_v<T, std::int64_t>) return Datatype(TypeKind::int64);
  else if constexpr (std::is_same_v<T, double>) return Datatype(TypeKind::float64);
  else return Datatype(TypeKind::byte);
}

using Bytes = std::vector<std::byte>;

/// Raw little-endian element bytes tagged with their datatype.
/// Invariant: bytes().size() == count() * dtype().width().
class DataBuffer {
 public:
  DataBuffer() : dtype_(TypeKind::byte) {}
  explicit DataBuffer(Datatype dtype) : dtype_(dtype) {}
  /// Throws ProtocolViolation if the byte length is not a whole number of
  /// elements.
  DataBuffer(Datatype dtype, Bytes bytes);

  Datatype dtype() const noexcept { return dtype_; }
  std::size_t count() const noexcept { return bytes_.size() / dtype_.width(); }
  std::size_t size_bytes() const noexcept { return bytes_.size(); }
  bool empty() const noexcept { return bytes_.empty(); }

  std::span<const std::byte> bytes() const noexcept { return bytes_; }
  std::span<std::byte> mutable_bytes() noexcept { return bytes_; }
  Bytes release() && { return std::move(bytes_); }

  friend bool operator==(const DataBuffer&, const DataBuffer&) = default;

 private:
  Datatype dtype_;
  Bytes bytes_;
};

template <class T>
DataBuffer buffer_of(std::span<const T> values) {
  Bytes bytes(values.size() * sizeof(T));
  if (!bytes.empty()) std::memcpy(bytes.data(), values.data(), bytes.size());
  return DataBuffer(Datatype::of<T>(), std::move(bytes));
}

template <class T>
DataBuffer buffer_of(const std::vector<T>& values) {
  return buffer_of(std::span<const T>(values));
}

template <class T>
DataBuffer buffer_of(std::initializer_list<T> values) {
  return buffer_of(std::span<const T>(values.begin(), values.size()));
}

/// Throws ProtocolViolation if T does not match the buffer's datatype.
template <class T>
std::vector<T> unpack(const DataBuffer& buf) {
  if (buf.dtype() != Datatype::of<T>()) {
    throw FmiError(ErrorKind::ProtocolViolation,
                   "unpack: buffer holds " + std::string(to_string(buf.dtype().kind())));
  }
  std::vector<T> out(buf.count());
  if (!out.empty()) std::memcpy(out.data(), buf.bytes().data(), buf.size_bytes());
  return out;
}

/// An associative binary function applied element-wise. The left operand
/// always comes from the lower rank(s); `commutative()` tells collectives
/// whether they may reorder operands.
class ReductionOp {
 public:
  using Kernel = std::function<void(Datatype, std::span<const std::byte> lhs,
                                    std::span<const std::byte> rhs,
                                    std::span<std::byte> out)>;

  ReductionOp(std::string name, bool commutative, Kernel kernel);

  static ReductionOp sum();
  static ReductionOp prod();
  static ReductionOp min();
  static ReductionOp max();
  /// Keeps the left operand. Used by the direct barrier.
  static ReductionOp noop();

  /// Wraps an element function `T fn(T lhs, T rhs)`. The resulting op only
  /// accepts buffers of datatype T.
  template <class T, class F>
  static ReductionOp custom(std::string name, F fn, bool commutative) {
    return ReductionOp(
        std::move(name), commutative,
        [fn](Datatype dtype, std::span<const std::byte> lhs, std::span<const std::byte> rhs,
             std::span<std::byte> out) {
          if (dtype != Datatype::of<T>()) {
            throw FmiError(ErrorKind::ProtocolViolation, "custom reduction: datatype mismatch");
          }
          const std::size_t n = lhs.size() / sizeof(T);
          for (std::size_t i = 0; i < n; ++i) {
            T a, b;
            std::memcpy(&a, lhs.data() + i * sizeof(T), sizeof(T));
            std::memcpy(&b, rhs.data() + i * sizeof(T), sizeof(T));
            const T r = fn(a, b);
            std::memcpy(out.data() + i * sizeof(T), &r, sizeof(T));
          }
        });
  }

  const std::string& name() const noexcept { return name_; }
  bool commutative() const noexcept { return commutative_; }
  const Kernel& kernel() const noexcept { return kernel_; }

 private:
  std::string name_;
  bool commutative_;
  Kernel kernel_;
};

/// Element-wise `op(a[i], b[i])`. Throws ProtocolViolation on dtype or count
/// mismatch.
DataBuffer apply_reduce(const ReductionOp& op, const DataBuffer& a, const DataBuffer& b);

}  // namespace fmi
