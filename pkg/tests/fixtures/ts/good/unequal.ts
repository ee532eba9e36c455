@problemName Unequal
@timeStamps false
@univariate false
@dimensions 2
@equalLength false
@classLabel true x y z
@data
0.1,0.2,0.3,0.4:1,2,3,4:x
0.5,0.6:5,6:y
0.7,0.8,0.9:7,8,9:z
