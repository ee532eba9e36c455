#comment line
#another one

@problemName UniMissing
@timeStamps false
@missing true
@univariate true
@equalLength true
@seriesLength 5
@classLabel true 1 2
@data
1,2,?,4,5:1
5,?,?,2,1:2
0,0,0,0,0:1
