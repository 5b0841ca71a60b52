#pragma once

#include "lcs/binary_io.hpp"
#include "lcs/container.hpp"
#include "lcs/conv.hpp"
#include "lcs/error.hpp"
#include "lcs/image.hpp"
#include "lcs/metrics.hpp"
#include "lcs/model.hpp"
#include "lcs/niqe.hpp"
#include "lcs/ops.hpp"
#include "lcs/quantize.hpp"
#include "lcs/reparam.hpp"
#include "lcs/tensor.hpp"
