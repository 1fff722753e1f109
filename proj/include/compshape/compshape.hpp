#pragma once

#include "compshape/error.hpp"
#include "compshape/geometry.hpp"
#include "compshape/gridmath.hpp"
#include "compshape/shapemodel.hpp"
#include "compshape/model_io.hpp"
#include "compshape/fmap.hpp"
#include "compshape/featurestack.hpp"
#include "compshape/parallel.hpp"
#include "compshape/inference.hpp"
#include "compshape/structlearn.hpp"
#include "compshape/synth.hpp"
#include "compshape/paramlearn.hpp"
#include "compshape/evalbench.hpp"
