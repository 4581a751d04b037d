# Package marker for evaluation