#include "mixalign/align_loss.hpp"

#include <algorithm>
#include <stdexcept>

namespace mixalign {

DomainPartition drop_absent_domains(std::span<const int> domain_ids, std::span<const int> known_domains) {
  DomainPartition part;
  if (known_domains.empty()) {
    for (std::size_t i = 0; i < domain_ids.size(); ++i) {
      const auto it = std::find(part.domains.begin(), part.domains.end(), domain_ids[i]);
      if (it == part.domains.end()) {
        part.domains.push_back(domain_ids[i]);
        part.members.push_back({i});
      } else {
        part.members[static_cast<std::size_t>(it - part.domains.begin())].push_back(i);
      }
    }
    return part;
  }
  for (int id : domain_ids) {
    if (std::find(known_domains.begin(), known_domains.end(), id) == known_domains.end()) {
      throw std::invalid_argument("drop_absent_domains: unknown domain id " + std::to_string(id));
    }
  }
  for (int d : known_domains) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < domain_ids.size(); ++i) {
      if (domain_ids[i] == d) idx.push_back(i);
    }
    if (!idx.empty()) {
      part.domains.push_back(d);
      part.members.push_back(std::move(idx));
    }
  }
  return part;
}

Tensor channel_descriptor(const Tensor& features) {
  if (features.dim() != 4) throw ShapeError("channel_descriptor: expected [B,C,H,W], got " + shape_str(features.shape()));
  if (features.shape()[2] * features.shape()[3] == 0) throw ShapeError("channel_descriptor: zero spatial extent");
  return mean(features, {2, 3});
}

Tensor alignment_loss(const Tensor& descriptors, const DomainPartition& partition) {
  if (descriptors.dim() != 2) throw ShapeError("alignment_loss: expected [B,C], got " + shape_str(descriptors.shape()));
  if (partition.empty()) throw std::invalid_argument("alignment_loss: no domains in batch");
  const std::size_t batch = descriptors.shape()[0];
  std::vector<Tensor> domain_means;
  domain_means.reserve(partition.size());
  for (std::size_t d = 0; d < partition.size(); ++d) {
    const auto& idx = partition.members[d];
    if (idx.empty()) {
      throw std::invalid_argument("alignment_loss: domain " + std::to_string(partition.domains[d]) + " has no samples");
    }
    for (std::size_t i : idx) {
      if (i >= batch) throw ShapeError("alignment_loss: sample index out of range");
    }
    domain_means.push_back(mean(index_select(descriptors, idx), {0}, true));
  }
  const Tensor spread = variance(concat(domain_means, 0), {0});
  return mean(log(add_scalar(spread, 1.0)));
}

}  // namespace mixalign
