#pragma once

#include "hsgs/adam.hpp"
#include "hsgs/camera.hpp"
#include "hsgs/common.hpp"
#include "hsgs/gaussian.hpp"
#include "hsgs/hemisphere.hpp"
#include "hsgs/image.hpp"
#include "hsgs/losses.hpp"
#include "hsgs/pipeline.hpp"
#include "hsgs/ply.hpp"
#include "hsgs/png_io.hpp"
#include "hsgs/pointcloud_render.hpp"
#include "hsgs/raster.hpp"
#include "hsgs/toy_scene.hpp"
#include "hsgs/train.hpp"
