# Package marker for simulation