#include "alignreid/kernels/kernels.hpp"

#include <algorithm>

namespace areid::kernels::serial {

namespace {

// Returns false when the tap falls into the zero padding.
bool source_index(const ConvGeometry& g, std::size_t o, std::size_t k,
                  std::size_t extent, std::size_t& src) {
  const auto pos = static_cast<long>(o * g.stride + k) - static_cast<long>(g.pad);
  if (pos < 0 || pos >= static_cast<long>(extent)) return false;
  src = static_cast<std::size_t>(pos);
  return true;
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w(), k = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t co = 0; co < g.out_channels; ++co)
      for (std::size_t oh = 0; oh < oh_n; ++oh)
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          double acc = bias.empty() ? 0.0 : bias[co];
          for (std::size_t ci = 0; ci < g.in_channels; ++ci)
            for (std::size_t kh = 0; kh < k; ++kh)
              for (std::size_t kw = 0; kw < k; ++kw) {
                std::size_t ih, iw;
                if (!source_index(g, oh, kh, g.in_h, ih) ||
                    !source_index(g, ow, kw, g.in_w, iw))
                  continue;
                acc += weight[((co * g.in_channels + ci) * k + kh) * k + kw] *
                       input[((n * g.in_channels + ci) * g.in_h + ih) * g.in_w + iw];
              }
          output[((n * g.out_channels + co) * oh_n + oh) * ow_n + ow] = acc;
        }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> weight,
                           std::span<const double> grad_out,
                           std::span<double> grad_in) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w(), k = g.kernel;
  std::fill(grad_in.begin(), grad_in.end(), 0.0);
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t co = 0; co < g.out_channels; ++co)
      for (std::size_t oh = 0; oh < oh_n; ++oh)
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          const double up = grad_out[((n * g.out_channels + co) * oh_n + oh) * ow_n + ow];
          for (std::size_t ci = 0; ci < g.in_channels; ++ci)
            for (std::size_t kh = 0; kh < k; ++kh)
              for (std::size_t kw = 0; kw < k; ++kw) {
                std::size_t ih, iw;
                if (!source_index(g, oh, kh, g.in_h, ih) ||
                    !source_index(g, ow, kw, g.in_w, iw))
                  continue;
                grad_in[((n * g.in_channels + ci) * g.in_h + ih) * g.in_w + iw] +=
                    up * weight[((co * g.in_channels + ci) * k + kh) * k + kw];
              }
        }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_out,
                            std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w(), k = g.kernel;
  std::fill(grad_weight.begin(), grad_weight.end(), 0.0);
  std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t co = 0; co < g.out_channels; ++co)
      for (std::size_t oh = 0; oh < oh_n; ++oh)
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          const double up = grad_out[((n * g.out_channels + co) * oh_n + oh) * ow_n + ow];
          if (!grad_bias.empty()) grad_bias[co] += up;
          for (std::size_t ci = 0; ci < g.in_channels; ++ci)
            for (std::size_t kh = 0; kh < k; ++kh)
              for (std::size_t kw = 0; kw < k; ++kw) {
                std::size_t ih, iw;
                if (!source_index(g, oh, kh, g.in_h, ih) ||
                    !source_index(g, ow, kw, g.in_w, iw))
                  continue;
                grad_weight[((co * g.in_channels + ci) * k + kh) * k + kw] +=
                    up * input[((n * g.in_channels + ci) * g.in_h + ih) * g.in_w + iw];
              }
        }
}

}  // namespace areid::kernels::serial
