#include "fmi/reference.hpp"

namespace fmi::reference {

DataBuffer gather(std::span<const DataBuffer> inputs) {
  if (inputs.empty()) return {};
  Bytes out;
  for (const auto& b : inputs) out.insert(out.end(), b.bytes().begin(), b.bytes().end());
  return DataBuffer(inputs.front().dtype(), std::move(out));
}

std::vector<DataBuffer> scatter(const DataBuffer& root_buf, int n) {
  if (n < 1 || root_buf.count() % static_cast<std::size_t>(n) != 0) {
    throw FmiError(ErrorKind::ProtocolViolation, "scatter count not divisible by world size");
  }
  const std::size_t slice = root_buf.size_bytes() / static_cast<std::size_t>(n);
  std::vector<DataBuffer> out;
  for (int i = 0; i < n; ++i) {
    auto first = root_buf.bytes().begin() + static_cast<std::ptrdiff_t>(slice * static_cast<std::size_t>(i));
    out.emplace_back(root_buf.dtype(), Bytes(first, first + static_cast<std::ptrdiff_t>(slice)));
  }
  return out;
}

DataBuffer reduce(std::span<const DataBuffer> inputs, const ReductionOp& op) {
  DataBuffer acc = inputs.front();
  for (std::size_t i = 1; i < inputs.size(); ++i) acc = apply_reduce(op, acc, inputs[i]);
  return acc;
}

std::vector<DataBuffer> scan(std::span<const DataBuffer> inputs, const ReductionOp& op) {
  std::vector<DataBuffer> out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    out.push_back(i == 0 ? inputs[0] : apply_reduce(op, out.back(), inputs[i]));
  }
  return out;
}

}  // namespace fmi::reference
