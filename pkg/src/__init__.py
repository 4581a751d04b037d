# Package marker for src directory