# Package marker for autonomy.mapping