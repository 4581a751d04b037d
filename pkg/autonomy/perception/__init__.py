# Package marker for autonomy.perception