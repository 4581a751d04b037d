# Package marker for autonomy