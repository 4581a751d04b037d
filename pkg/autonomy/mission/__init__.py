# Package marker for autonomy.mission