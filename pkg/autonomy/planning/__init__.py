# Package marker for autonomy.planning